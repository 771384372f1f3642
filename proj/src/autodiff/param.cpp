// SPDX-License-Identifier: Apache-2.0
#include "padmae/autodiff/param.hpp"

#include <stdexcept>

namespace padmae::ad {

Param::Param(std::string name_, Tensor value_, bool weight_decay_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(Tensor::zeros(value.shape())),
      weight_decay(weight_decay_) {}

Param& ParamStore::add(std::string name, Tensor value, bool weight_decay) {
  if (index_.contains(name)) throw std::invalid_argument("ParamStore: duplicate param " + name);
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Param>(std::move(name), std::move(value), weight_decay));
  return *params_.back();
}

Param* ParamStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Param* ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Param& ParamStore::get(std::string_view name) {
  if (Param* p = find(name)) return *p;
  throw std::out_of_range("ParamStore: no param named " + std::string(name));
}

const Param& ParamStore::get(std::string_view name) const {
  if (const Param* p = find(name)) return *p;
  throw std::out_of_range("ParamStore: no param named " + std::string(name));
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

std::vector<Param*> ParamStore::all(std::string_view prefix) {
  std::vector<Param*> out;
  for (auto& p : params_) {
    if (p->name.starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

std::vector<const Param*> ParamStore::all(std::string_view prefix) const {
  std::vector<const Param*> out;
  for (const auto& p : params_) {
    if (p->name.starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

}  // namespace padmae::ad
