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

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace contmeas {

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Work items must be
/// independent. If any items throw, the exception of the lowest failing
/// index is rethrown, so failures do not depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, unsigned jobs, Body &&body) {
    if (n == 0) return;
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    std::vector<std::exception_ptr> errors(n);
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        // Items above the lowest failure are skipped; items below it always run.
        std::atomic<std::size_t> first_failure{n};
        auto worker = [&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n || i > first_failure.load()) return;
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                    std::size_t cur = first_failure.load();
                    while (i < cur && !first_failure.compare_exchange_weak(cur, i)) {
                    }
                }
            }
        };
        std::vector<std::jthread> pool;
        pool.reserve(jobs);
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    }
    for (auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline unsigned default_jobs() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace contmeas
