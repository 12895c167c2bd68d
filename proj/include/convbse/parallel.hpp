// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <exception>
#include <functional>

namespace convbse {

// Available cores, or CONVBSE_THREADS when set to a positive integer.
int default_num_threads();
void set_num_threads(int n);
int num_threads();

// Runs fn(0) .. fn(n - 1), possibly concurrently. The first exception
// thrown by any call is rethrown once all calls have finished.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace convbse
