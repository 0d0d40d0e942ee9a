// Copyright 2026 The domixt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Everything in one include.

#pragma once

#include "domixt/config.hpp"
#include "domixt/corpus.hpp"
#include "domixt/error.hpp"
#include "domixt/eval.hpp"
#include "domixt/experiment.hpp"
#include "domixt/nncore/adam.hpp"
#include "domixt/nncore/graph.hpp"
#include "domixt/nncore/tensor.hpp"
#include "domixt/schedules.hpp"
#include "domixt/seq2seq/checkpoint.hpp"
#include "domixt/seq2seq/model.hpp"
#include "domixt/seq2seq/search.hpp"
#include "domixt/subword.hpp"
#include "domixt/synthgen.hpp"
#include "domixt/util.hpp"
