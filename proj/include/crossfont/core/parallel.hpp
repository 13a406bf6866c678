#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "crossfont/core/autograd.hpp"
#include "crossfont/core/ops.hpp"

namespace crossfont {

/// Worker count for batch-level parallelism. Honors CROSSFONT_DEVICE
/// ("cpu" or "cpu:<threads>"); parallel results are reduced in sample order,
/// so the thread count never changes the numbers.
inline int runtime_threads() {
    static int n = [] {
        if (const char* env = std::getenv("CROSSFONT_DEVICE")) {
            std::string s(env);
            auto colon = s.find(':');
            if (colon != std::string::npos) {
                int v = std::atoi(s.c_str() + colon + 1);
                if (v >= 1) return v;
            }
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }();
    return n;
}

template <typename T>
struct BatchGrad {
    double loss = 0;                 // summed losses as returned by the closure
    GradMap<T> grads;                // summed gradients, deterministic order
};

namespace detail {

template <typename T>
void add_into(GradMap<T>& acc, const GradMap<T>& part) {
    NoGradGuard off;
    for (const auto& [node, g] : part) {
        auto it = acc.find(node);
        if (it == acc.end())
            acc.emplace(node, g);
        else
            it->second = add(it->second, g);
    }
}

}  // namespace detail

/// Builds and differentiates n independent per-sample graphs, possibly on
/// several threads, and reduces losses/gradients in sample order. The closure
/// must scale its loss for the batch itself (e.g. by 1/n) and must only read
/// shared state.
template <typename T>
BatchGrad<T> batch_backward(long n, const std::function<Var<T>(long)>& sample_loss) {
    BatchGrad<T> out;
    int workers = std::min<long>(n, runtime_threads());
    std::vector<double> losses(static_cast<std::size_t>(n), 0.0);
    std::vector<GradMap<T>> maps(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));

    auto run_range = [&](int worker) {
        try {
            for (long i = worker; i < n; i += workers) {
                Var<T> loss = sample_loss(i);
                losses[static_cast<std::size_t>(i)] = static_cast<double>(loss.item());
                // leaves_only: interior node addresses are recycled across samples
                maps[static_cast<std::size_t>(i)] = backward(loss, false, true);
            }
        } catch (...) {
            errors[static_cast<std::size_t>(worker)] = std::current_exception();
        }
    };

    if (workers <= 1) {
        run_range(0);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(run_range, w);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (long i = 0; i < n; ++i) {
        out.loss += losses[static_cast<std::size_t>(i)];
        detail::add_into(out.grads, maps[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace crossfont
