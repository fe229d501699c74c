// Copyright 2026 The contmeas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "contmeas/config.hpp"
#include "contmeas/errors.hpp"
#include "contmeas/experiment.hpp"
#include "contmeas/gaussian_oracle.hpp"
#include "contmeas/grid.hpp"
#include "contmeas/hilbert.hpp"
#include "contmeas/instrument.hpp"
#include "contmeas/io.hpp"
#include "contmeas/nonselective.hpp"
#include "contmeas/parallel.hpp"
#include "contmeas/stochastic.hpp"
#include "contmeas/unraveling.hpp"
