/*
 * Copyright 2026 The neoseize Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header.

#pragma once

#include "neoseize/autograd.hpp"
#include "neoseize/cli.hpp"
#include "neoseize/eeg_data.hpp"
#include "neoseize/fcn_model.hpp"
#include "neoseize/metrics.hpp"
#include "neoseize/optimizer.hpp"
#include "neoseize/postproc.hpp"
#include "neoseize/preprocess.hpp"
#include "neoseize/svg.hpp"
#include "neoseize/synth.hpp"
#include "neoseize/trainer.hpp"
