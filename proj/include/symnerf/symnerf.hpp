#pragma once

#include "symnerf/common.hpp"
#include "symnerf/geometry.hpp"
#include "symnerf/image.hpp"
#include "symnerf/encoder.hpp"
#include "symnerf/mlp.hpp"
#include "symnerf/field.hpp"
#include "symnerf/hypernet.hpp"
#include "symnerf/renderer.hpp"
#include "symnerf/view.hpp"
#include "symnerf/model.hpp"
#include "symnerf/synthdata.hpp"
#include "symnerf/metrics.hpp"
#include "symnerf/config.hpp"
#include "symnerf/trainer.hpp"
