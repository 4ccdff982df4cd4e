/*
 * Copyright (c) the purview authors.
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
#pragma once

#include "purview/bench.hpp"
#include "purview/compiler.hpp"
#include "purview/condition.hpp"
#include "purview/consent.hpp"
#include "purview/errors.hpp"
#include "purview/evaluator.hpp"
#include "purview/field_path.hpp"
#include "purview/oracle.hpp"
#include "purview/planner.hpp"
#include "purview/policy.hpp"
#include "purview/registry.hpp"
#include "purview/schema.hpp"
#include "purview/time_util.hpp"
#include "purview/value.hpp"
#include "purview/workspace.hpp"
