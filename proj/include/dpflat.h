// Copyright 2026 The dpflat Authors
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

#ifndef DPFLAT_DPFLAT_H_
#define DPFLAT_DPFLAT_H_

#include "dpflat/accountant.h"
#include "dpflat/checkpoint.h"
#include "dpflat/config.h"
#include "dpflat/dataset.h"
#include "dpflat/dp.h"
#include "dpflat/errors.h"
#include "dpflat/flatness.h"
#include "dpflat/metrics.h"
#include "dpflat/mia.h"
#include "dpflat/model.h"
#include "dpflat/objective.h"
#include "dpflat/pipeline.h"
#include "dpflat/rng.h"
#include "dpflat/tensor.h"
#include "dpflat/zeroth_order.h"

#endif  // DPFLAT_DPFLAT_H_
