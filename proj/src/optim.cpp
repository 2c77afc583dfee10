#include "macft/optim.hpp"

#include <cmath>

#include "macft/common.hpp"

namespace macft {

std::uint64_t params_checksum(const ParamRefs& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const Param* p : params) {
        h = hash_bytes(p->name.data(), p->name.size(), h);
        h = hash_bytes(p->value.data(), p->value.size() * sizeof(double), h);
    }
    return h;
}

void AdamW::add_group(ParamRefs params, double lr) {
    std::vector<State> st(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        st[i].m.assign(params[i]->value.size(), 0.0);
        st[i].v.assign(params[i]->value.size(), 0.0);
    }
    groups_.push_back({std::move(params), lr});
    state_.push_back(std::move(st));
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        const double lr = groups_[g].lr;
        for (std::size_t i = 0; i < groups_[g].params.size(); ++i) {
            Param& p = *groups_[g].params[i];
            check(p.value.has_grad(), "AdamW::step on parameter without gradient: ", p.name);
            State& st = state_[g][i];
            double* w = p.value.data();
            const double* grad = p.value.grad();
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                st.m[j] = beta1_ * st.m[j] + (1.0 - beta1_) * grad[j];
                st.v[j] = beta2_ * st.v[j] + (1.0 - beta2_) * grad[j] * grad[j];
                const double mhat = st.m[j] / bc1;
                const double vhat = st.v[j] / bc2;
                w[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[j]);
            }
        }
    }
}

void AdamW::zero_grad() {
    for (auto& g : groups_)
        for (Param* p : g.params) p->value.zero_grad();
}

}  // namespace macft
