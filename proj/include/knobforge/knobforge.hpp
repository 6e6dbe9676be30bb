#pragma once

#include "knobforge/error.hpp"
#include "knobforge/evaluation.hpp"
#include "knobforge/factor.hpp"
#include "knobforge/forest.hpp"
#include "knobforge/gmm.hpp"
#include "knobforge/gpr.hpp"
#include "knobforge/kmeans.hpp"
#include "knobforge/mapping.hpp"
#include "knobforge/mlp.hpp"
#include "knobforge/model_selection.hpp"
#include "knobforge/pipeline.hpp"
#include "knobforge/regressor.hpp"
#include "knobforge/scaler.hpp"
#include "knobforge/synth.hpp"
#include "knobforge/table.hpp"

namespace knobforge {
inline constexpr const char* kVersion = "0.1.0";
}
