#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tagrpo/tape.hpp"
#include "tagrpo/types.hpp"

namespace tagrpo {

// Ordered collection of named parameters. Names are unique, shapes are fixed
// after insertion, and the version counter increases on every optimizer step
// so snapshots taken at different times carry distinct stamps.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Matrix value, bool requires_grad = true);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  // Insertion order; every iteration over parameters uses this.
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;

  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }
  void set_version(std::uint64_t v) { version_ = v; }

  void zero_grad();

  // Deep copy. Clones share nothing with the source; requires_grad is set on
  // every parameter of the clone as given.
  ParamStore clone(bool requires_grad) const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> params_;
  std::uint64_t version_ = 0;
};

}  // namespace tagrpo
