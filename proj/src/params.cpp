#include "leprompter/params.hpp"

#include <algorithm>
#include <cmath>

#include "leprompter/error.hpp"
#include "leprompter/rng.hpp"

namespace leprompter {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (contains(name)) throw ContractError("duplicate parameter name: " + name);
    auto v = Var::leaf(std::move(init));
    index_.emplace(name, names_.size());
    names_.push_back(name);
    nodes_.push_back(v.node());
    return v;
}

const std::shared_ptr<Node>& ParamStore::node(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return nodes_[it->second];
}

Var ParamStore::get(const std::string& name) const { return Var(node(name)); }
Tensor& ParamStore::value(const std::string& name) { return node(name)->value; }
const Tensor& ParamStore::value(const std::string& name) const { return node(name)->value; }

Tensor ParamStore::grad(const std::string& name) const {
    const auto& n = node(name);
    return n->grad.data.empty() ? Tensor::zeros(n->value.shape) : n->grad;
}

bool ParamStore::has_grad(const std::string& name) const { return !node(name)->grad.data.empty(); }

void ParamStore::zero_grad() {
    for (auto& n : nodes_) n->grad = Tensor();
}

std::size_t ParamStore::scalar_count() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) total += n->value.size();
    return total;
}

std::size_t ParamStore::scalar_count(std::string_view prefix) const {
    std::size_t total = 0;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].starts_with(prefix)) total += nodes_[i]->value.size();
    }
    return total;
}

void AdamW::step(ParamStore& params) {
    ++t_;
    for (const auto& name : params.names()) {
        if (!params.has_grad(name)) continue;
        Tensor& p = params.value(name);
        const Tensor g = params.grad(name);
        auto& st = state_[name];
        if (st.m.data.empty()) {
            st.m = Tensor::zeros(p.shape);
            st.v = Tensor::zeros(p.shape);
        }
        ++st.t;
        const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(st.t));
        const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(st.t));
        for (std::size_t i = 0; i < p.size(); ++i) {
            st.m[i] = opts_.beta1 * st.m[i] + (1.0 - opts_.beta1) * g[i];
            st.v[i] = opts_.beta2 * st.v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            p[i] -= opts_.lr * (mhat / (std::sqrt(vhat) + opts_.eps) + opts_.weight_decay * p[i]);
        }
    }
}

GradCheckReport grad_check(const std::function<Var(ParamStore&)>& f, ParamStore& params,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    params.zero_grad();
    const Var out = f(params);
    backward(out);

    auto selected = [&](const std::string& name) {
        if (options.prefixes.empty()) return true;
        return std::any_of(options.prefixes.begin(), options.prefixes.end(),
                           [&](const std::string& p) { return name.starts_with(p); });
    };
    auto evaluate = [&](const std::string& name) {
        try {
            const double v = f(params).value()[0];
            if (!std::isfinite(v)) throw NumericError("non-finite loss");
            return v;
        } catch (const NumericError& e) {
            throw NumericError("grad_check: perturbing " + name + ": " + e.what());
        }
    };

    Rng rng(options.seed);
    for (const auto& name : params.names()) {
        if (!selected(name)) continue;
        const Tensor analytic = params.grad(name);
        Tensor& value = params.value(name);
        std::vector<std::size_t> indices;
        if (value.size() <= options.max_elements) {
            indices.resize(value.size());
            for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        } else {
            indices = rng.sample_indices(value.size(), options.max_elements);
        }
        for (auto i : indices) {
            const double saved = value[i];
            double plus = 0.0, minus = 0.0;
            try {
                value[i] = saved + options.step;
                plus = evaluate(name);
                value[i] = saved - options.step;
                minus = evaluate(name);
            } catch (const NumericError& e) {
                value[i] = saved;
                report.passed = false;
                report.failure = e.what();
                report.worst_param = name;
                report.worst_index = i;
                return report;
            }
            value[i] = saved;
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double a = analytic[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = i;
            }
        }
    }
    report.passed = report.max_rel_error < options.tolerance;
    return report;
}

} // namespace leprompter
