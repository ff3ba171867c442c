// Copyright 2026 The dpproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "dpproc/agents.hpp"
#include "dpproc/benchmarks.hpp"
#include "dpproc/contracts.hpp"
#include "dpproc/distributions.hpp"
#include "dpproc/error.hpp"
#include "dpproc/incentive_audit.hpp"
#include "dpproc/mechanism.hpp"
#include "dpproc/privacy_audit.hpp"
#include "dpproc/rng.hpp"
#include "dpproc/stats.hpp"
