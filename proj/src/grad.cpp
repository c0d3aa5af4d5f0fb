#include "trackcouple/grad.hpp"

#include <algorithm>
#include <cmath>

#include "trackcouple/error.hpp"

namespace trackcouple {

BlockId ParamStore::add_block(std::string name, BlockRole role, std::size_t size) {
  for (const auto& b : blocks_) {
    if (b.name == name) throw Error(ErrorCode::kConfigInvalid, "duplicate block name: " + name);
  }
  blocks_.push_back(Block{std::move(name), role, std::vector<double>(size, 0.0)});
  return BlockId{blocks_.size() - 1};
}

BlockId ParamStore::id(std::string_view name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return BlockId{i};
  }
  throw Error(ErrorCode::kUnknownBlock, std::string(name));
}

Tape::Tape(const ParamStore& store) {
  for (std::size_t i = 0; i < store.block_count(); ++i) {
    const BlockId b{i};
    names_.push_back(store.name(b));
    roles_.push_back(store.role(b));
    grads_.emplace_back(store.size(b), 0.0);
  }
}

void Tape::reset() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

void Tape::accumulate(std::string_view block, std::size_t index, double partial,
                      RoutingMask routing) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == block) {
      accumulate(BlockId{i}, index, partial, routing);
      return;
    }
  }
  throw Error(ErrorCode::kUnknownBlock, std::string(block));
}

void Tape::accumulate(BlockId block, std::size_t index, double partial, RoutingMask routing) {
  if (block.value >= grads_.size()) throw Error(ErrorCode::kUnknownBlock, "block id out of range");
  auto& g = grads_[block.value];
  if (index >= g.size()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                names_[block.value] + "[" + std::to_string(index) + "]");
  }
  if (routing.admits(roles_[block.value])) g[index] += partial;
}

void Tape::accumulate3(BlockId block, std::size_t first, const Vec3& partial, RoutingMask routing) {
  if (block.value >= grads_.size()) throw Error(ErrorCode::kUnknownBlock, "block id out of range");
  auto& g = grads_[block.value];
  if (first + 3 > g.size()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                names_[block.value] + "[" + std::to_string(first) + "..+3]");
  }
  if (!routing.admits(roles_[block.value])) return;
  g[first] += partial.x();
  g[first + 1] += partial.y();
  g[first + 2] += partial.z();
}

void Tape::merge(const Tape& other) {
  for (std::size_t b = 0; b < grads_.size(); ++b) {
    for (std::size_t k = 0; k < grads_[b].size(); ++k) grads_[b][k] += other.grads_[b][k];
  }
}

double Tape::max_abs() const {
  double m = 0.0;
  for (const auto& g : grads_) {
    for (double v : g) m = std::max(m, std::abs(v));
  }
  return m;
}

FdResult finite_diff_check(const LossFn& loss, ParamStore& store, BlockId block,
                           std::span<const std::size_t> indices, double h,
                           const FdOptions& options) {
  if (!(h > 0.0)) throw Error(ErrorCode::kConfigInvalid, "finite-difference step must be positive");
  Tape tape(store);
  loss(&tape);
  const auto analytic = tape.gradient(block);
  auto values = store.values(block);

  FdResult result;
  for (std::size_t index : indices) {
    if (index >= values.size()) {
      throw Error(ErrorCode::kIndexOutOfRange, store.name(block) + "[" + std::to_string(index) + "]");
    }
    const double original = values[index];
    const double step = options.scale_step_by_magnitude ? h * std::max(1.0, std::abs(original)) : h;
    values[index] = original + step;
    const double plus = loss(nullptr);
    values[index] = original - step;
    const double minus = loss(nullptr);
    values[index] = original;

    FdSample s;
    s.index = index;
    s.analytic = analytic[index] * (1.0 + options.corruption);
    s.numeric = (plus - minus) / (2.0 * step);
    const double abs_err = std::abs(s.analytic - s.numeric);
    const double denom =
        std::max({std::abs(s.analytic), std::abs(s.numeric), options.denominator_floor});
    s.rel_error = abs_err / denom;
    if (s.rel_error > result.max_rel_error || result.samples.empty()) {
      result.max_rel_error = std::max(result.max_rel_error, s.rel_error);
      result.worst_index = index;
    }
    result.max_abs_error = std::max(result.max_abs_error, abs_err);
    result.samples.push_back(s);
  }
  return result;
}

}  // namespace trackcouple
