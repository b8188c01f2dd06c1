// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace nerfbooth {

// Fork-join helper with a fixed, worker-count-dependent split. Worker w gets
// the contiguous index range [begin_w, end_w); results that need reduction are
// written into per-worker slots and merged by the caller in worker order, so
// floating-point accumulation order is a pure function of (n, workers).
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (n == 0) return;
  workers = std::max(1, workers);
  std::size_t w = std::min<std::size_t>(std::size_t(workers), n);
  if (w == 1) {
    fn(0, n, 0);
    return;
  }
  std::size_t chunk = (n + w - 1) / w;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t i = 1; i < w; ++i) {
    std::size_t b = i * chunk, e = std::min(n, (i + 1) * chunk);
    if (b >= e) continue;
    threads.emplace_back([&fn, b, e, i, &errors] {
      try {
        fn(b, e, int(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  try {
    fn(0, std::min(n, chunk), 0);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : threads) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

inline int default_workers() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

}  // namespace nerfbooth
