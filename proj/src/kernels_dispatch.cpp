#include "geez/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace geez::kernels {

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

namespace {

const Backend& select() {
    if (const char* force = std::getenv("GEEZ_KERNELS")) {
        if (std::strcmp(force, "scalar") == 0) return scalar_backend();
        if (std::strcmp(force, "avx2") == 0 && avx2_available()) return avx2_backend();
    }
    return avx2_available() ? avx2_backend() : scalar_backend();
}

}  // namespace

const Backend& active() {
    static const Backend& chosen = select();
    return chosen;
}

}  // namespace geez::kernels
