// Copyright 2026 The diffmm Authors
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

#pragma once

#include "diffmm/checkpoint.hpp"
#include "diffmm/config.hpp"
#include "diffmm/data_io.hpp"
#include "diffmm/diffusion.hpp"
#include "diffmm/eval.hpp"
#include "diffmm/fusion.hpp"
#include "diffmm/graph.hpp"
#include "diffmm/modality.hpp"
#include "diffmm/numerics.hpp"
#include "diffmm/ssl.hpp"
#include "diffmm/training.hpp"
