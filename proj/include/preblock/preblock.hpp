#pragma once

#include "preblock/ablation.hpp"
#include "preblock/calibration.hpp"
#include "preblock/config.hpp"
#include "preblock/corpus_labels.hpp"
#include "preblock/features.hpp"
#include "preblock/harness.hpp"
#include "preblock/model.hpp"
#include "preblock/splitter.hpp"
#include "preblock/stats_eval.hpp"
#include "preblock/weights.hpp"
