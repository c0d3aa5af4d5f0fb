#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trackcouple/pose.hpp"

namespace trackcouple {

enum class BlockRole { kPointmaps, kTracks, kPoses };

// Which parameter branches a loss term may send gradient to. Everything else
// sits behind a stop-gradient.
struct RoutingMask {
  bool to_tracks = false;
  bool to_pointmaps = false;
  bool to_poses = false;

  static constexpr RoutingMask tracks() { return {true, false, false}; }
  static constexpr RoutingMask pointmaps() { return {false, true, false}; }
  static constexpr RoutingMask poses() { return {false, false, true}; }

  bool admits(BlockRole role) const {
    switch (role) {
      case BlockRole::kPointmaps: return to_pointmaps;
      case BlockRole::kTracks: return to_tracks;
      case BlockRole::kPoses: return to_poses;
    }
    return false;
  }
  bool any() const { return to_tracks || to_pointmaps || to_poses; }
};

struct BlockId {
  std::size_t value = 0;
  friend bool operator==(BlockId, BlockId) = default;
};

// Named flat parameter blocks. Blocks can be added but never resized.
class ParamStore {
 public:
  BlockId add_block(std::string name, BlockRole role, std::size_t size);

  // Throws kUnknownBlock.
  BlockId id(std::string_view name) const;

  std::size_t block_count() const { return blocks_.size(); }
  const std::string& name(BlockId b) const { return blocks_[b.value].name; }
  BlockRole role(BlockId b) const { return blocks_[b.value].role; }
  std::size_t size(BlockId b) const { return blocks_[b.value].values.size(); }

  std::span<double> values(BlockId b) { return blocks_[b.value].values; }
  std::span<const double> values(BlockId b) const { return blocks_[b.value].values; }

 private:
  struct Block {
    std::string name;
    BlockRole role;
    std::vector<double> values;
  };
  std::vector<Block> blocks_;
};

// Gradient accumulator laid out like a ParamStore. Accumulation is additive and
// silently drops partials whose routing excludes the block's role.
class Tape {
 public:
  explicit Tape(const ParamStore& store);

  void reset();

  // Checked entry points; throw kUnknownBlock / kIndexOutOfRange.
  void accumulate(std::string_view block, std::size_t index, double partial, RoutingMask routing);
  void accumulate(BlockId block, std::size_t index, double partial, RoutingMask routing);
  // Adds a 3-vector at [first, first + 3).
  void accumulate3(BlockId block, std::size_t first, const Vec3& partial, RoutingMask routing);

  std::span<const double> gradient(BlockId b) const { return grads_[b.value]; }
  std::span<double> gradient(BlockId b) { return grads_[b.value]; }
  std::size_t block_count() const { return grads_.size(); }

  // Adds another tape's gradients; merge per-thread tapes in a fixed order.
  void merge(const Tape& other);

  // Infinity norm over all blocks.
  double max_abs() const;

 private:
  std::vector<std::string> names_;
  std::vector<BlockRole> roles_;
  std::vector<std::vector<double>> grads_;
};

// Evaluates a loss; when tape is non-null it also accumulates routed gradients.
using LossFn = std::function<double(Tape* tape)>;

struct FdSample {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct FdResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<FdSample> samples;
};

struct FdOptions {
  // Step is h * max(1, |theta|) when set.
  bool scale_step_by_magnitude = true;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double denominator_floor = 1e-7;
  // Test hook: analytic gradients are multiplied by (1 + corruption).
  double corruption = 0.0;
};

// Compares tape gradients of `loss` at `indices` of `block` with central
// differences (L(theta + h) - L(theta - h)) / 2h. The store is perturbed in
// place and restored bitwise before returning.
FdResult finite_diff_check(const LossFn& loss, ParamStore& store, BlockId block,
                           std::span<const std::size_t> indices, double h,
                           const FdOptions& options = {});

}  // namespace trackcouple
