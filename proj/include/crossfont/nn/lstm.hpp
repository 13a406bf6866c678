#pragma once

#include <string>
#include <vector>

#include "crossfont/nn/layers.hpp"

namespace crossfont {

/// Stacked LSTM operating on [1, dim] rows, one step at a time. Gate layout
/// in the fused weight matrices is [input | forget | cell | output].
template <typename T>
class LstmStack {
public:
    struct State {
        std::vector<Var<T>> h;  // per layer, [1, hidden]
        std::vector<Var<T>> c;
    };

    LstmStack() = default;
    LstmStack(ParamRegistry<T>& reg, const std::string& prefix, long input_dim, long hidden,
              long layers, std::mt19937_64& rng)
        : input_dim_(input_dim), hidden_(hidden), layers_(layers) {
        require(layers >= 1, "LstmStack: need at least one layer");
        for (long l = 0; l < layers; ++l) {
            long in = l == 0 ? input_dim : hidden;
            std::string p = prefix + ".l" + std::to_string(l);
            wx_.push_back(reg.add(p + ".wx",
                                  Var<T>::leaf(init::xavier<T>({in, 4 * hidden}, in, hidden, rng))));
            wh_.push_back(reg.add(
                p + ".wh", Var<T>::leaf(init::xavier<T>({hidden, 4 * hidden}, hidden, hidden, rng))));
            Tensor<T> bias = Tensor<T>::zeros({1, 4 * hidden});
            for (long j = hidden; j < 2 * hidden; ++j) bias[j] = T(1);  // forget gate bias
            b_.push_back(reg.add(p + ".b", Var<T>::leaf(bias)));
        }
    }

    long hidden() const { return hidden_; }
    long layers() const { return layers_; }

    State initial_state() const {
        State s;
        for (long l = 0; l < layers_; ++l) {
            s.h.push_back(Var<T>::constant(Tensor<T>::zeros({1, hidden_})));
            s.c.push_back(Var<T>::constant(Tensor<T>::zeros({1, hidden_})));
        }
        return s;
    }

    /// One time step. Returns the new state; `state.h[l]` afterwards is the
    /// step's hidden activation of layer l.
    State step(const Var<T>& x, const State& state) const {
        State next;
        next.h.resize(layers_);
        next.c.resize(layers_);
        Var<T> inp = x;
        for (long l = 0; l < layers_; ++l) {
            auto gates = add(add(matmul(inp, wx_[l]), matmul(state.h[l], wh_[l])), b_[l]);
            auto i = sigmoid(slice_cols(gates, 0, hidden_));
            auto f = sigmoid(slice_cols(gates, hidden_, hidden_));
            auto g = tanh_op(slice_cols(gates, 2 * hidden_, hidden_));
            auto o = sigmoid(slice_cols(gates, 3 * hidden_, hidden_));
            auto c = add(mul(f, state.c[l]), mul(i, g));
            auto h = mul(o, tanh_op(c));
            next.c[l] = c;
            next.h[l] = h;
            inp = h;
        }
        return next;
    }

private:
    std::vector<Var<T>> wx_, wh_, b_;
    long input_dim_ = 0, hidden_ = 0, layers_ = 0;
};

}  // namespace crossfont
