#pragma once

#include "silenzio/errors.hpp"
#include "silenzio/matrix.hpp"
#include "silenzio/random.hpp"
#include "silenzio/gadget_vm.hpp"
#include "silenzio/finite_ring.hpp"
#include "silenzio/linalg_rns.hpp"
#include "silenzio/scaling.hpp"
#include "silenzio/dataset.hpp"
#include "silenzio/nn.hpp"
#include "silenzio/data.hpp"
#include "silenzio/float_reference.hpp"
#include "silenzio/config.hpp"
#include "silenzio/report.hpp"
#include "silenzio/experiment.hpp"
#include "silenzio/verify.hpp"
