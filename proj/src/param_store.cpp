#include "tagrpo/param_store.hpp"

#include <stdexcept>

namespace tagrpo {

Tensor& ParamStore::add(const std::string& name, Matrix value, bool requires_grad) {
  if (params_.count(name))
    throw std::runtime_error("ParamStore: duplicate parameter name '" + name + "'");
  names_.push_back(name);
  auto [it, ok] = params_.emplace(name, Tensor(std::move(value), requires_grad));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("ParamStore: no parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("ParamStore: no parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& name : names_) n += static_cast<std::size_t>(at(name).value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (const auto& name : names_) at(name).zero_grad();
}

ParamStore ParamStore::clone(bool requires_grad) const {
  ParamStore out;
  for (const auto& name : names_) out.add(name, at(name).value, requires_grad);
  out.version_ = version_;
  return out;
}

}  // namespace tagrpo
