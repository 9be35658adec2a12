// Runtime BLAS/LAPACK resolution.
//
// OpenBLAS is loaded with dlopen at first use instead of being linked at
// build time. Two reasons:
//   * the library stays usable on hosts without OpenBLAS (built-in kernels
//     take over), and
//   * distribution builds of OpenBLAS (<= 0.3.23) fall back to their
//     generic SSE2 "Prescott" kernels when they do not recognise the CPU
//     model, which is common on newer Xeons inside VMs. Because the kernel
//     choice is fixed when the library initialises, the only fix is to set
//     OPENBLAS_CORETYPE before it loads; dlopen lets us re-open the library
//     with a corrected value when we detect that situation.
//
// The backend is pinned to one thread: training must be a deterministic
// function of (seed, config), and threaded BLAS reductions are not.

#include "blas_backend.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>

#if defined(__unix__) || defined(__APPLE__)
#include <dlfcn.h>
#define HAN_HAVE_DLOPEN 1
#endif

namespace han::detail {
namespace {

std::string g_backend_name = "builtin";

#ifdef HAN_HAVE_DLOPEN

bool cpu_flag(const char* flag) {
#if defined(__linux__) && defined(__x86_64__)
    std::FILE* f = std::fopen("/proc/cpuinfo", "r");
    if (!f) return false;
    bool found = false;
    char line[4096];
    while (std::fgets(line, sizeof line, f)) {
        if (std::strncmp(line, "flags", 5) != 0) continue;
        const char* p = line;
        std::size_t n = std::strlen(flag);
        while ((p = std::strstr(p, flag)) != nullptr) {
            bool left_ok = (p == line) || p[-1] == ' ' || p[-1] == ':';
            bool right_ok = p[n] == ' ' || p[n] == '\n' || p[n] == '\0';
            if (left_ok && right_ok) { found = true; break; }
            p += n;
        }
        if (found) break;
    }
    std::fclose(f);
    return found;
#else
    (void)flag;
    return false;
#endif
}

void* open_openblas() {
    for (const char* name : {"libopenblas.so.0", "libopenblas.so", "libopenblas.dylib"}) {
        if (void* h = dlopen(name, RTLD_NOW | RTLD_LOCAL)) return h;
    }
    return nullptr;
}

// Kernel families OpenBLAS selects when it cannot identify the CPU.
bool is_fallback_core(const char* core) {
    if (!core) return false;
    for (const char* c : {"Prescott", "Northwood", "Katmai", "PRESCOTT", "generic"}) {
        if (std::strcmp(core, c) == 0) return true;
    }
    return false;
}

BlasBackend load_openblas() {
    BlasBackend backend;
    void* handle = open_openblas();
    if (!handle) return backend;

    auto corename = reinterpret_cast<char* (*)()>(dlsym(handle, "openblas_get_corename"));

    if (!std::getenv("OPENBLAS_CORETYPE") && corename && is_fallback_core(corename())) {
        const char* want = nullptr;
        if (cpu_flag("avx512f") && cpu_flag("avx512vl") && cpu_flag("avx512dq") &&
            cpu_flag("avx512bw")) {
            want = "SKYLAKEX";
        } else if (cpu_flag("avx2") && cpu_flag("fma")) {
            want = "HASWELL";
        }
        if (want && dlclose(handle) == 0) {
            setenv("OPENBLAS_CORETYPE", want, 1);
            handle = open_openblas();
            if (!handle) {
                unsetenv("OPENBLAS_CORETYPE");
                handle = open_openblas();
                if (!handle) return backend;
            }
            corename = reinterpret_cast<char* (*)()>(dlsym(handle, "openblas_get_corename"));
        }
    }

    auto dgemm = reinterpret_cast<DgemmFn>(dlsym(handle, "cblas_dgemm"));
    if (!dgemm) return backend;

    if (auto set_threads =
            reinterpret_cast<void (*)(int)>(dlsym(handle, "openblas_set_num_threads"))) {
        set_threads(1);
    }

    backend.dgemm = dgemm;
    backend.dsyev = reinterpret_cast<DsyevFn>(dlsym(handle, "dsyev_"));
    g_backend_name = std::string("openblas(") + (corename ? corename() : "?") + ")";
    backend.name = g_backend_name.c_str();
    return backend;
}

#endif // HAN_HAVE_DLOPEN

} // namespace

const BlasBackend& blas() {
    static BlasBackend backend = [] {
#ifdef HAN_HAVE_DLOPEN
        return load_openblas();
#else
        return BlasBackend{};
#endif
    }();
    return backend;
}

} // namespace han::detail
