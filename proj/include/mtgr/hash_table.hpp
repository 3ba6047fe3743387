#pragma once

// Dynamic hash embedding table with decoupled key and value storage.
//
// KeyIndex is a compact open-addressed map (linear probing, 64-bit
// multiply-shift hash) from EmbeddingKey to a slot number. ValueSlab owns
// the embedding rows in fixed-size chunks plus per-slot metadata; chunks are
// never reallocated, so growing either structure leaves every stored row at
// the same address. Expansion rehashes only the key index.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mtgr/errors.hpp"

namespace mtgr {

struct EmbeddingKey {
  std::uint32_t table_id = 0;
  std::int64_t feature_id = 0;

  auto operator<=>(const EmbeddingKey&) const = default;
};

struct EmbeddingKeyHash {
  std::size_t operator()(const EmbeddingKey& k) const noexcept {
    std::uint64_t x = static_cast<std::uint64_t>(k.feature_id) ^ (std::uint64_t{k.table_id} * 0x9E3779B97F4A7C15ULL);
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated embedding checkpoint");
  return v;
}

}  // namespace detail

class KeyIndex {
 public:
  static constexpr std::uint64_t kDefaultMultiplier = 0xD6E8FEB86659FD93ULL;
  static constexpr std::int64_t kEmpty = -1;

  explicit KeyIndex(std::size_t capacity = 16, std::uint64_t multiplier = kDefaultMultiplier)
      : multiplier_(multiplier | 1ULL) {
    reset(std::bit_ceil(std::max<std::size_t>(capacity, 2)));
  }

  std::size_t capacity() const { return keys_.size(); }
  std::size_t size() const { return size_; }
  double load_factor() const { return static_cast<double>(size_) / static_cast<double>(capacity()); }
  std::uint64_t multiplier() const { return multiplier_; }

  /// Multiply-shift over the (table_id, feature_id) pair.
  std::size_t home(const EmbeddingKey& key) const {
    const std::uint64_t x =
        static_cast<std::uint64_t>(key.feature_id) ^ (std::uint64_t{key.table_id} * 0x9E3779B97F4A7C15ULL);
    return static_cast<std::size_t>((x * multiplier_) >> shift_);
  }

  std::optional<std::int64_t> find(const EmbeddingKey& key) const {
    const std::size_t mask = capacity() - 1;
    for (std::size_t i = home(key);; i = (i + 1) & mask) {
      if (slots_[i] == kEmpty) return std::nullopt;
      if (keys_[i] == key) return slots_[i];
    }
  }

  /// Inserts a fresh key. The caller guarantees the key is absent and that
  /// the load factor leaves room.
  void insert(const EmbeddingKey& key, std::int64_t slot) {
    const std::size_t mask = capacity() - 1;
    std::size_t i = home(key);
    while (slots_[i] != kEmpty) i = (i + 1) & mask;
    keys_[i] = key;
    slots_[i] = slot;
    ++size_;
  }

  /// Backward-shift deletion keeps probe chains intact without tombstones.
  bool erase(const EmbeddingKey& key) {
    const std::size_t mask = capacity() - 1;
    std::size_t i = home(key);
    while (true) {
      if (slots_[i] == kEmpty) return false;
      if (keys_[i] == key) break;
      i = (i + 1) & mask;
    }
    std::size_t hole = i;
    for (std::size_t j = (hole + 1) & mask; slots_[j] != kEmpty; j = (j + 1) & mask) {
      const std::size_t h = home(keys_[j]);
      // Move j into the hole unless its home lies cyclically in (hole, j].
      const bool stays = (hole <= j) ? (hole < h && h <= j) : (hole < h || h <= j);
      if (!stays) {
        keys_[hole] = keys_[j];
        slots_[hole] = slots_[j];
        hole = j;
      }
    }
    slots_[hole] = kEmpty;
    keys_[hole] = {};
    --size_;
    return true;
  }

  /// Doubles capacity and rehashes. Slot numbers are carried over unchanged.
  void grow() {
    std::vector<EmbeddingKey> old_keys = std::move(keys_);
    std::vector<std::int64_t> old_slots = std::move(slots_);
    reset(old_keys.size() * 2);
    for (std::size_t i = 0; i < old_keys.size(); ++i) {
      if (old_slots[i] != kEmpty) insert(old_keys[i], old_slots[i]);
    }
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      if (slots_[i] != kEmpty) fn(keys_[i], slots_[i]);
    }
  }

 private:
  void reset(std::size_t capacity) {
    keys_.assign(capacity, EmbeddingKey{});
    slots_.assign(capacity, kEmpty);
    size_ = 0;
    shift_ = 64 - std::countr_zero(capacity);
  }

  std::vector<EmbeddingKey> keys_;
  std::vector<std::int64_t> slots_;
  std::size_t size_ = 0;
  int shift_ = 0;
  std::uint64_t multiplier_;
};

struct SlotMetadata {
  std::uint64_t access_count = 0;
  /// Logical access clock; larger is more recent.
  std::uint64_t last_access = 0;
  /// Training step of the last access (0 outside of any step).
  std::uint64_t last_step = 0;
  /// Lazy Adam step count for this row.
  std::uint64_t adam_steps = 0;
  bool live = false;
  EmbeddingKey key{};
};

/// Chunked row storage: rows plus Adam moments, never moved once allocated.
template <typename Scalar>
class ValueSlab {
 public:
  ValueSlab(int dim, std::size_t chunk_rows) : dim_(dim), chunk_rows_(chunk_rows) {
    if (dim <= 0) throw ContractError("ValueSlab: dim must be positive");
    if (chunk_rows == 0) throw ContractError("ValueSlab: chunk_rows must be positive");
  }

  int dim() const { return dim_; }
  std::size_t chunk_rows() const { return chunk_rows_; }
  std::size_t allocated_rows() const { return meta_.size(); }

  /// Appends a zeroed row; returns its slot.
  std::size_t add_row() {
    const std::size_t slot = meta_.size();
    if (slot % chunk_rows_ == 0) {
      const std::size_t n = chunk_rows_ * static_cast<std::size_t>(dim_);
      values_.push_back(std::make_unique<Scalar[]>(n));
      first_.push_back(std::make_unique<Scalar[]>(n));
      second_.push_back(std::make_unique<Scalar[]>(n));
    }
    meta_.emplace_back();
    return slot;
  }

  std::span<Scalar> values(std::size_t slot) { return row(values_, slot); }
  std::span<const Scalar> values(std::size_t slot) const { return row(values_, slot); }
  std::span<Scalar> adam_m(std::size_t slot) { return row(first_, slot); }
  std::span<Scalar> adam_v(std::size_t slot) { return row(second_, slot); }
  std::span<const Scalar> adam_m(std::size_t slot) const { return row(first_, slot); }
  std::span<const Scalar> adam_v(std::size_t slot) const { return row(second_, slot); }
  SlotMetadata& meta(std::size_t slot) { return meta_[slot]; }
  const SlotMetadata& meta(std::size_t slot) const { return meta_[slot]; }

  void clear_row(std::size_t slot) {
    std::fill_n(values(slot).data(), dim_, Scalar(0));
    std::fill_n(adam_m(slot).data(), dim_, Scalar(0));
    std::fill_n(adam_v(slot).data(), dim_, Scalar(0));
    meta_[slot] = SlotMetadata{};
  }

 private:
  template <typename Chunks>
  auto row(Chunks& chunks, std::size_t slot) const {
    using Elem = std::conditional_t<std::is_const_v<std::remove_reference_t<Chunks>>, const Scalar, Scalar>;
    Scalar* base = chunks[slot / chunk_rows_].get() + (slot % chunk_rows_) * static_cast<std::size_t>(dim_);
    return std::span<Elem>(base, static_cast<std::size_t>(dim_));
  }

  int dim_;
  std::size_t chunk_rows_;
  std::vector<std::unique_ptr<Scalar[]>> values_;
  std::vector<std::unique_ptr<Scalar[]>> first_;
  std::vector<std::unique_ptr<Scalar[]>> second_;
  std::vector<SlotMetadata> meta_;
};

struct TableOptions {
  std::size_t initial_capacity = 1024;
  /// Maximum live rows; 0 means unbounded.
  std::size_t max_rows = 0;
  bool eviction = true;
  double max_load_factor = 0.75;
  bool auto_expand = true;
  std::uint64_t seed = 0x5EEDULL;
  /// Half-width of the uniform initializer; <= 0 means 1/sqrt(dim).
  double init_scale = 0.0;
  std::size_t chunk_rows = 256;
};

template <typename Scalar>
class DynamicHashTable {
 public:
  static constexpr char kMagic[8] = {'M', 'T', 'G', 'R', 'H', 'T', 'B', '1'};
  static constexpr std::uint32_t kVersion = 1;

  DynamicHashTable(int dim, TableOptions options = {})
      : options_(options), index_(options.initial_capacity), slab_(dim, options.chunk_rows) {}

  int dim() const { return slab_.dim(); }
  std::size_t size() const { return index_.size(); }
  std::size_t index_capacity() const { return index_.capacity(); }
  double load_factor() const { return index_.load_factor(); }
  const TableOptions& options() const { return options_; }
  const KeyIndex& index() const { return index_; }
  const ValueSlab<Scalar>& slab() const { return slab_; }
  ValueSlab<Scalar>& slab() { return slab_; }
  std::size_t expansions() const { return expansions_; }

  /// Marks the start of a training step; keys touched during the current
  /// step are pinned against eviction. Step 0 means "no step".
  void begin_step(std::uint64_t step) { step_ = step; }
  std::uint64_t current_step() const { return step_; }

  std::optional<std::size_t> find(const EmbeddingKey& key) const {
    auto slot = index_.find(key);
    if (!slot) return std::nullopt;
    return static_cast<std::size_t>(*slot);
  }

  /// Existing key: its row. New key: a seeded uniform row in
  /// [-scale, scale]^dim that depends only on (seed, key). Updates metadata.
  std::span<const Scalar> lookup_or_init(const EmbeddingKey& key) { return slab_.values(lookup_slot(key)); }

  std::size_t lookup_slot(const EmbeddingKey& key) {
    std::size_t slot;
    if (auto found = index_.find(key)) {
      slot = static_cast<std::size_t>(*found);
    } else {
      slot = insert_new(key);
    }
    SlotMetadata& m = slab_.meta(slot);
    ++m.access_count;
    m.last_access = ++clock_;
    m.last_step = step_;
    return slot;
  }

  /// The deterministic initial row for a key.
  std::vector<Scalar> initial_row(const EmbeddingKey& key) const {
    std::uint64_t state = options_.seed ^ EmbeddingKeyHash{}(key);
    const double bound = options_.init_scale > 0 ? options_.init_scale : 1.0 / std::sqrt(static_cast<double>(dim()));
    std::vector<Scalar> row(static_cast<std::size_t>(dim()));
    for (auto& v : row) {
      const double u = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-53;  // [0, 1)
      v = static_cast<Scalar>((2.0 * u - 1.0) * bound);
    }
    return row;
  }

  /// Doubles the key index only; value rows are left where they are.
  void expand() {
    index_.grow();
    ++expansions_;
  }

  /// Removes up to n live, unpinned rows with the smallest
  /// (access_count, last_access). Returns the evicted keys in eviction order.
  std::vector<EmbeddingKey> evict(std::size_t n) {
    std::vector<EmbeddingKey> out;
    if (n == 0) return out;
    if (!options_.eviction) throw ContractError("evict() on a table with eviction disabled");
    std::vector<std::size_t> candidates;
    for (std::size_t s = 0; s < slab_.allocated_rows(); ++s) {
      const auto& m = slab_.meta(s);
      if (m.live && !(step_ != 0 && m.last_step == step_)) candidates.push_back(s);
    }
    const std::size_t take = std::min(n, candidates.size());
    auto priority = [this](std::size_t a, std::size_t b) {
      const auto& ma = slab_.meta(a);
      const auto& mb = slab_.meta(b);
      if (ma.access_count != mb.access_count) return ma.access_count < mb.access_count;
      return ma.last_access < mb.last_access;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      priority);
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t slot = candidates[i];
      const EmbeddingKey key = slab_.meta(slot).key;
      index_.erase(key);
      slab_.clear_row(slot);
      free_slots_.push_back(slot);
      out.push_back(key);
    }
    return out;
  }

  /// Per physical table: header, packed (key, slot) pairs in slot order, then
  /// raw slab rows (values, Adam moments) and per-slot metadata.
  void save(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    detail::write_pod(out, kVersion);
    detail::write_pod(out, static_cast<std::uint32_t>(sizeof(Scalar)));
    detail::write_pod(out, static_cast<std::uint32_t>(dim()));
    detail::write_pod(out, static_cast<std::uint64_t>(index_.size()));
    detail::write_pod(out, static_cast<std::uint64_t>(index_.capacity()));
    detail::write_pod(out, index_.multiplier());
    detail::write_pod(out, static_cast<std::uint64_t>(slab_.allocated_rows()));
    detail::write_pod(out, static_cast<std::uint64_t>(slab_.chunk_rows()));
    detail::write_pod(out, clock_);
    detail::write_pod(out, options_.seed);
    for (std::size_t s = 0; s < slab_.allocated_rows(); ++s) {
      const auto& m = slab_.meta(s);
      if (!m.live) continue;
      detail::write_pod(out, m.key.table_id);
      detail::write_pod(out, m.key.feature_id);
      detail::write_pod(out, static_cast<std::uint64_t>(s));
    }
    const auto row_bytes = static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(dim()));
    for (std::size_t s = 0; s < slab_.allocated_rows(); ++s) {
      const auto& m = slab_.meta(s);
      out.write(reinterpret_cast<const char*>(slab_.values(s).data()), row_bytes);
      out.write(reinterpret_cast<const char*>(slab_.adam_m(s).data()), row_bytes);
      out.write(reinterpret_cast<const char*>(slab_.adam_v(s).data()), row_bytes);
      detail::write_pod(out, m.access_count);
      detail::write_pod(out, m.last_access);
      detail::write_pod(out, m.last_step);
      detail::write_pod(out, m.adam_steps);
      detail::write_pod(out, static_cast<std::uint8_t>(m.live));
    }
  }

  static DynamicHashTable load(std::istream& in, TableOptions options = {}) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw DataError("bad embedding checkpoint magic");
    if (detail::read_pod<std::uint32_t>(in) != kVersion) throw DataError("unsupported embedding checkpoint version");
    if (detail::read_pod<std::uint32_t>(in) != sizeof(Scalar)) throw DataError("embedding checkpoint precision mismatch");
    const int dim = static_cast<int>(detail::read_pod<std::uint32_t>(in));
    const auto live = detail::read_pod<std::uint64_t>(in);
    const auto capacity = detail::read_pod<std::uint64_t>(in);
    const auto multiplier = detail::read_pod<std::uint64_t>(in);
    const auto rows = detail::read_pod<std::uint64_t>(in);
    options.chunk_rows = detail::read_pod<std::uint64_t>(in);
    const auto clock = detail::read_pod<std::uint64_t>(in);
    options.seed = detail::read_pod<std::uint64_t>(in);
    options.initial_capacity = capacity;

    DynamicHashTable table(dim, options);
    table.index_ = KeyIndex(capacity, multiplier);
    table.clock_ = clock;
    std::vector<std::pair<EmbeddingKey, std::uint64_t>> pairs(live);
    for (auto& [key, slot] : pairs) {
      key.table_id = detail::read_pod<std::uint32_t>(in);
      key.feature_id = detail::read_pod<std::int64_t>(in);
      slot = detail::read_pod<std::uint64_t>(in);
      if (slot >= rows) throw DataError("embedding checkpoint slot out of range");
    }
    const auto row_bytes = static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(dim));
    for (std::uint64_t s = 0; s < rows; ++s) {
      table.slab_.add_row();
      in.read(reinterpret_cast<char*>(table.slab_.values(s).data()), row_bytes);
      in.read(reinterpret_cast<char*>(table.slab_.adam_m(s).data()), row_bytes);
      in.read(reinterpret_cast<char*>(table.slab_.adam_v(s).data()), row_bytes);
      auto& m = table.slab_.meta(s);
      m.access_count = detail::read_pod<std::uint64_t>(in);
      m.last_access = detail::read_pod<std::uint64_t>(in);
      m.last_step = detail::read_pod<std::uint64_t>(in);
      m.adam_steps = detail::read_pod<std::uint64_t>(in);
      m.live = detail::read_pod<std::uint8_t>(in) != 0;
    }
    for (const auto& [key, slot] : pairs) {
      table.index_.insert(key, static_cast<std::int64_t>(slot));
      table.slab_.meta(slot).key = key;
    }
    for (std::uint64_t s = 0; s < rows; ++s) {
      if (!table.slab_.meta(s).live) table.free_slots_.push_back(s);
    }
    return table;
  }

 private:
  std::size_t insert_new(const EmbeddingKey& key) {
    if (options_.max_rows != 0 && index_.size() >= options_.max_rows) {
      if (!options_.eviction) {
        throw CapacityError("embedding table full (" + std::to_string(options_.max_rows) + " rows) and eviction disabled");
      }
      if (evict(1).empty()) throw CapacityError("embedding table full and every row is pinned by the current step");
    }
    if (static_cast<double>(index_.size() + 1) > options_.max_load_factor * static_cast<double>(index_.capacity())) {
      if (!options_.auto_expand) throw CapacityError("key index full and auto-expansion disabled");
      expand();
    }
    std::size_t slot;
    if (!free_slots_.empty()) {
      // Reuse the lowest free slot so the layout stays deterministic.
      auto it = std::min_element(free_slots_.begin(), free_slots_.end());
      slot = *it;
      free_slots_.erase(it);
    } else {
      slot = slab_.add_row();
    }
    const auto init = initial_row(key);
    std::copy(init.begin(), init.end(), slab_.values(slot).begin());
    SlotMetadata& m = slab_.meta(slot);
    m.live = true;
    m.key = key;
    index_.insert(key, static_cast<std::int64_t>(slot));
    return slot;
  }

  TableOptions options_;
  KeyIndex index_;
  ValueSlab<Scalar> slab_;
  std::vector<std::size_t> free_slots_;
  std::uint64_t clock_ = 0;
  std::uint64_t step_ = 0;
  std::size_t expansions_ = 0;
};

}  // namespace mtgr
