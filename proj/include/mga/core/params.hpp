#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mga/core/autograd.hpp"
#include "mga/core/ops.hpp"

namespace mga::nn {

// Named trainable parameters plus non-trainable buffers (batch-norm running
// statistics). Parameters are leaf Vars so a forward pass can reference them
// directly and backward() accumulates into them.
//
// Copying a store is shallow (the Vars are shared); use clone() for a
// snapshot.
class ParameterStore {
 public:
  Var& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Var& get(const std::string& name) const;
  Var& get(const std::string& name);

  void add_buffer(const std::string& name, Tensor init);
  bool has_buffer(const std::string& name) const { return buffers_.count(name) != 0; }
  Tensor& buffer(const std::string& name);
  const Tensor& buffer(const std::string& name) const;

  // Registers the three buffers batch_norm needs under `prefix`.
  void add_batch_norm_buffers(const std::string& prefix, std::size_t channels);
  BatchNormStats batch_norm_stats(const std::string& prefix);

  // Frozen parameters stop requiring gradients and are skipped by Adam.
  void freeze(const std::string& name);
  void unfreeze(const std::string& name);
  void unfreeze_all();
  // Freezes every parameter whose name does not start with one of `prefixes`.
  void freeze_all_except(const std::vector<std::string>& prefixes);
  bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }
  const std::set<std::string>& frozen() const { return frozen_; }

  std::vector<std::string> names() const;
  std::vector<std::string> buffer_names() const;
  const std::map<std::string, Var>& params() const { return params_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

  // Total element count of parameters whose name starts with any prefix
  // (all parameters when `prefixes` is empty).
  std::size_t parameter_count(const std::vector<std::string>& prefixes = {}) const;

  void zero_grad();
  ParameterStore clone() const;

  // Copies values (and buffers) for every name in `source` that starts with
  // one of `prefixes`, creating entries that do not exist yet.
  void copy_from(const ParameterStore& source, const std::vector<std::string>& prefixes);

 private:
  std::map<std::string, Var> params_;
  std::map<std::string, Tensor> buffers_;
  std::set<std::string> frozen_;
};

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes);

}  // namespace mga::nn
