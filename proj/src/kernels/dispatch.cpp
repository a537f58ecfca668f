#include "mve/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"

namespace mve::kernels {

namespace {

constexpr KernelTable kScalar{Isa::Scalar,  scalar::dot, scalar::axpy,         scalar::sum_squares,
                              scalar::scale, scalar::sum, scalar::elu,          scalar::exp,
                              scalar::elu_backward, scalar::mul, scalar::gemm_nn, scalar::gemm_tn,
                              scalar::gemm_nt, scalar::adam_update};

#if defined(MVE_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::Avx2,  avx2::dot, avx2::axpy,         avx2::sum_squares,
                            avx2::scale, avx2::sum, avx2::elu,          avx2::exp,
                            avx2::elu_backward, avx2::mul, avx2::gemm_nn, avx2::gemm_tn,
                            avx2::gemm_nt, avx2::adam_update};

bool cpu_has_avx2() {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* initial_choice() {
    const char* force = std::getenv("MVE_FORCE_SCALAR");
    if (force != nullptr && std::strcmp(force, "0") != 0 && force[0] != '\0') return &kScalar;
    if (const KernelTable* t = avx2_table()) return t;
    return &kScalar;
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{initial_choice()};
    return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(MVE_HAVE_AVX2)
    static const bool ok = cpu_has_avx2();
    return ok ? &kAvx2 : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

Isa select(Isa isa) {
    const KernelTable* t = &kScalar;
    if (isa == Isa::Avx2 && avx2_table() != nullptr) t = avx2_table();
    slot().store(t, std::memory_order_relaxed);
    return t->isa;
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

}  // namespace mve::kernels
