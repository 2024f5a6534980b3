// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "motor/core.hpp"
#include "motor/embedding_store.hpp"
#include "motor/errors.hpp"
#include "motor/evalkit.hpp"
#include "motor/ot_solver.hpp"
#include "motor/pipeline.hpp"
#include "motor/reranker.hpp"
#include "motor/retriever.hpp"
#include "motor/similarity.hpp"
