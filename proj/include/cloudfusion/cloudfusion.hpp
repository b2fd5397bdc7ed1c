#pragma once

#include "cloudfusion/binary_io.hpp"
#include "cloudfusion/checkpoint.hpp"
#include "cloudfusion/cloudmask.hpp"
#include "cloudfusion/config.hpp"
#include "cloudfusion/error.hpp"
#include "cloudfusion/experiments.hpp"
#include "cloudfusion/losses.hpp"
#include "cloudfusion/metrics.hpp"
#include "cloudfusion/model.hpp"
#include "cloudfusion/ops.hpp"
#include "cloudfusion/optim.hpp"
#include "cloudfusion/parallel.hpp"
#include "cloudfusion/raster.hpp"
#include "cloudfusion/raster_io.hpp"
#include "cloudfusion/simulate.hpp"
#include "cloudfusion/tensor.hpp"
#include "cloudfusion/train.hpp"
#include "cloudfusion/version.hpp"
