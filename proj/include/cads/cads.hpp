/*
 * Copyright 2026 The CADS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CADS_CADS_HPP_
#define CADS_CADS_HPP_

#include "cads/conformal.hpp"
#include "cads/core.hpp"
#include "cads/evaluation.hpp"
#include "cads/io.hpp"
#include "cads/optimizer.hpp"
#include "cads/profiling.hpp"
#include "cads/router.hpp"
#include "cads/split.hpp"
#include "cads/synthetic.hpp"

#endif  // CADS_CADS_HPP_
