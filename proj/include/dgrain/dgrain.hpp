// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dgrain/ablation.hpp"
#include "dgrain/captions.hpp"
#include "dgrain/checkpoint.hpp"
#include "dgrain/config.hpp"
#include "dgrain/error.hpp"
#include "dgrain/eval.hpp"
#include "dgrain/graph.hpp"
#include "dgrain/grid.hpp"
#include "dgrain/model.hpp"
#include "dgrain/objective.hpp"
#include "dgrain/optim.hpp"
#include "dgrain/random.hpp"
#include "dgrain/records.hpp"
#include "dgrain/scene.hpp"
#include "dgrain/tensor.hpp"
#include "dgrain/train.hpp"
#include "dgrain/vocab.hpp"
