#pragma once

#include "curves/core/error.hpp"
#include "curves/core/time.hpp"
#include "curves/curve.hpp"
#include "curves/market_data.hpp"
#include "curves/ransac.hpp"
#include "curves/synth.hpp"
#include "curves/zc_estimator.hpp"
