#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "leprompter/autograd.hpp"

namespace leprompter {

/// Named trainable tensors in insertion order. Each parameter is a graph
/// leaf; gradients accumulate across backward passes until zero_grad().
class ParamStore {
  public:
    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::string>& names() const { return names_; }
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    /// Accumulated gradient, or zeros if none has arrived since zero_grad().
    Tensor grad(const std::string& name) const;
    bool has_grad(const std::string& name) const;
    void zero_grad();

    std::size_t scalar_count() const;
    std::size_t scalar_count(std::string_view prefix) const;

  private:
    const std::shared_ptr<Node>& node(const std::string& name) const;

    std::vector<std::string> names_;
    std::vector<std::shared_ptr<Node>> nodes_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Adaptive moments with decoupled weight decay. Parameters that received
/// no gradient since the last zero_grad() are left untouched.
class AdamW {
  public:
    struct Options {
        double lr = 6e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    explicit AdamW(Options opts) : opts_(opts) {}
    void step(ParamStore& params);
    const Options& options() const { return opts_; }
    std::uint64_t steps() const { return t_; }

  private:
    struct Moments {
        Tensor m, v;
        std::uint64_t t = 0;
    };
    Options opts_;
    std::uint64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

struct GradCheckOptions {
    double step = 1e-3;
    double tolerance = 1e-4;
    /// Elements compared per relative error are max(|a|,|n|,abs_floor).
    double abs_floor = 1e-6;
    /// Tensors larger than this are checked on a seeded sample of this many elements.
    std::size_t max_elements = 256;
    std::uint64_t seed = 0;
    /// When non-empty, only parameters whose name starts with one of these.
    std::vector<std::string> prefixes;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    bool passed = true;
    std::string failure; // set for non-finite values
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences, element by element.
GradCheckReport grad_check(const std::function<Var(ParamStore&)>& f, ParamStore& params,
                           const GradCheckOptions& options = {});

} // namespace leprompter
