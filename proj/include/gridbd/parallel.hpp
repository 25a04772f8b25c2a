#pragma once

// Index-space parallel loop over independent work items. threads <= 1 runs the
// serial reference path; both paths call `body` with the same indices and the
// body must write only to its own output slot.

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridbd {

inline int available_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <class Body>
void serial_for(std::size_t n, Body&& body) {
    for (std::size_t i = 0; i < n; ++i) body(i);
}

template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
#ifdef _OPENMP
    if (threads > 1 && n > 1) {
        // Exceptions cannot cross the OpenMP region; keep the lowest-index one.
        std::vector<std::exception_ptr> errors(n);
        const auto count = static_cast<long long>(n);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
        for (long long i = 0; i < count; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
        return;
    }
#else
    (void)threads;
#endif
    serial_for(n, body);
}

}  // namespace gridbd
