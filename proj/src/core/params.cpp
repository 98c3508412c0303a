#include "mga/core/params.hpp"

#include "mga/errors.hpp"

namespace mga::nn {

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (name.compare(0, p.size(), p) == 0) return true;
  }
  return false;
}

Var& ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ContractError("parameter already registered: " + name);
  return params_.emplace(name, Var::leaf(std::move(init), true)).first->second;
}

const Var& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter: " + name);
  return it->second;
}

Var& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::add_buffer(const std::string& name, Tensor init) {
  if (has_buffer(name)) throw ContractError("buffer already registered: " + name);
  buffers_.emplace(name, std::move(init));
}

Tensor& ParameterStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw StateError("unknown buffer: " + name);
  return it->second;
}

const Tensor& ParameterStore::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw StateError("unknown buffer: " + name);
  return it->second;
}

void ParameterStore::add_batch_norm_buffers(const std::string& prefix, std::size_t channels) {
  add_buffer(prefix + ".running_mean", Tensor({channels}, 0.0));
  add_buffer(prefix + ".running_var", Tensor({channels}, 1.0));
  add_buffer(prefix + ".updates", Tensor({1}, 0.0));
}

BatchNormStats ParameterStore::batch_norm_stats(const std::string& prefix) {
  return {&buffer(prefix + ".running_mean"), &buffer(prefix + ".running_var"), &buffer(prefix + ".updates")};
}

void ParameterStore::freeze(const std::string& name) {
  get(name).set_requires_grad(false);
  frozen_.insert(name);
}

void ParameterStore::unfreeze(const std::string& name) {
  get(name).set_requires_grad(true);
  frozen_.erase(name);
}

void ParameterStore::unfreeze_all() {
  for (auto& [name, var] : params_) var.set_requires_grad(true);
  frozen_.clear();
}

void ParameterStore::freeze_all_except(const std::vector<std::string>& prefixes) {
  for (auto& [name, var] : params_) {
    if (has_prefix(name, prefixes)) {
      var.set_requires_grad(true);
      frozen_.erase(name);
    } else {
      var.set_requires_grad(false);
      frozen_.insert(name);
    }
  }
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::vector<std::string> ParameterStore::buffer_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : buffers_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::parameter_count(const std::vector<std::string>& prefixes) const {
  std::size_t total = 0;
  for (const auto& [name, var] : params_) {
    if (prefixes.empty() || has_prefix(name, prefixes)) total += var.value().size();
  }
  return total;
}

void ParameterStore::zero_grad() {
  for (auto& [_, var] : params_) var.zero_grad();
}

ParameterStore ParameterStore::clone() const {
  ParameterStore out;
  for (const auto& [name, var] : params_) out.params_.emplace(name, Var::leaf(var.value(), var.requires_grad()));
  out.buffers_ = buffers_;
  out.frozen_ = frozen_;
  return out;
}

void ParameterStore::copy_from(const ParameterStore& source, const std::vector<std::string>& prefixes) {
  for (const auto& [name, var] : source.params_) {
    if (!has_prefix(name, prefixes)) continue;
    if (contains(name)) {
      if (!get(name).value().same_shape(var.value())) {
        throw DimensionError("parameter " + name + " has shape " + shape_string(get(name).shape()) +
                             " but source has " + shape_string(var.shape()));
      }
      get(name).mutable_value() = var.value();
    } else {
      add(name, var.value());
    }
  }
  for (const auto& [name, t] : source.buffers_) {
    if (has_prefix(name, prefixes)) buffers_[name] = t;
  }
}

}  // namespace mga::nn
