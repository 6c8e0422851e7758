// Copyright 2026 The knobtune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include "knobtune/config_space.hpp"
#include "knobtune/errors.hpp"
#include "knobtune/evaluator.hpp"
#include "knobtune/history.hpp"
#include "knobtune/metrics.hpp"
#include "knobtune/optimizer.hpp"
#include "knobtune/pipeline.hpp"
#include "knobtune/projection.hpp"
#include "knobtune/rng.hpp"
#include "knobtune/session.hpp"
