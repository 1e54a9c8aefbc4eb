#pragma once

#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace jbm {

// Applies the JBM_THREADS cap to the BLAS worker pool. Called once at
// process start by the CLI and test binaries.
inline void init_runtime() {
    if (const char* env = std::getenv("JBM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) openblas_set_num_threads(n);
    }
}

}  // namespace jbm
