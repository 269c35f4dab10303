#ifndef BNN_WEIGHTS_IO_HPP
#define BNN_WEIGHTS_IO_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnn/network.hpp"
#include "bnn/report.hpp"

namespace bnn {

// Layout: "BNNW", u32 version, i32 B, i32 m, i32 activation, i32 depths[B],
// i32 widths[B+1], then every slot in (b, l) order as row-major f64.
// All integers and floats little-endian.
inline constexpr std::array<char, 4> kWeightsMagic{'B', 'N', 'N', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof bits);
  for (std::size_t i = 0; i < sizeof bits; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class LeReader {
 public:
  explicit LeReader(const std::string& data) : data_(data) {}

  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    if (pos_ + sizeof(U) > data_.size()) throw Error("weights file truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof bits; ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof bits;
    T value;
    std::memcpy(&value, &bits, sizeof value);
    return value;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

inline std::int32_t checked_i32(Index v) {
  if (v < 0 || v > INT32_MAX) throw Error("dimension does not fit the weights header");
  return static_cast<std::int32_t>(v);
}

}  // namespace detail

inline std::string encode_weights(const WeightSet& w) {
  const NetworkSpec& spec = w.spec();
  std::string out(kWeightsMagic.begin(), kWeightsMagic.end());
  detail::put_le(out, kWeightsVersion);
  detail::put_le(out, static_cast<std::int32_t>(spec.blocks()));
  detail::put_le(out, detail::checked_i32(spec.hidden()));
  detail::put_le(out, static_cast<std::int32_t>(spec.activation() == Activation::identity ? 0 : 1));
  for (int d : spec.depths()) detail::put_le(out, static_cast<std::int32_t>(d));
  for (Index d : spec.widths()) detail::put_le(out, detail::checked_i32(d));
  for (int s = 0; s < w.slot_count(); ++s) {
    const Matrix& m = w.slot(s);
    for (Index i = 0; i < m.size(); ++i) detail::put_le(out, m.data()[i]);
  }
  return out;
}

inline WeightSet decode_weights(const std::string& data) {
  if (data.size() < 8 || !std::equal(kWeightsMagic.begin(), kWeightsMagic.end(), data.begin())) {
    throw Error("not a weights file (bad magic)");
  }
  detail::LeReader in(data);
  in.skip(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kWeightsVersion) throw Error("unsupported weights version " + std::to_string(version));
  const auto B = in.get<std::int32_t>();
  const auto m = in.get<std::int32_t>();
  const auto act = in.get<std::int32_t>();
  if (B < 1 || B > kMaxSlots || m < 1 || (act != 0 && act != 1)) throw Error("corrupt weights header");
  std::vector<int> depths;
  for (int b = 0; b < B; ++b) depths.push_back(in.get<std::int32_t>());
  std::vector<Index> widths;
  for (int b = 0; b <= B; ++b) widths.push_back(in.get<std::int32_t>());
  const NetworkSpec spec(depths, widths, m, act == 0 ? Activation::identity : Activation::tanh);
  std::size_t expected = 0;
  for (int s = 0; s < spec.slot_count(); ++s) {
    expected += static_cast<std::size_t>(spec.rows(s) * spec.cols(s)) * 8;
  }
  if (in.remaining() != expected) throw Error("weights payload size does not match its header");
  std::vector<Matrix> mats;
  for (int s = 0; s < spec.slot_count(); ++s) {
    Matrix mat(spec.rows(s), spec.cols(s));
    for (Index i = 0; i < mat.size(); ++i) mat.data()[i] = in.get<double>();
    mats.push_back(std::move(mat));
  }
  return WeightSet(spec, std::move(mats));
}

inline Json weights_sidecar(const WeightSet& w, std::optional<std::uint64_t> seed, std::size_t bytes) {
  const NetworkSpec& spec = w.spec();
  Json slots = Json::array();
  for (int s = 0; s < spec.slot_count(); ++s) {
    slots.push_back({{"block", spec.slot(s).block + 1},
                     {"layer", spec.slot(s).layer + 1},
                     {"rows", spec.rows(s)},
                     {"cols", spec.cols(s)}});
  }
  Json j = {{"format", "BNNW"},
            {"version", kWeightsVersion},
            {"byte_order", "little"},
            {"spec",
             {{"depths", spec.depths()},
              {"widths", spec.widths()},
              {"hidden", spec.hidden()},
              {"activation", to_string(spec.activation())}}},
            {"slots", slots},
            {"bytes", bytes}};
  if (seed) j["seed"] = *seed;
  return j;
}

/// Writes `<path>` and `<path>.json`.
inline void save_weights(const WeightSet& w, const std::filesystem::path& path,
                         std::optional<std::uint64_t> seed = std::nullopt) {
  const std::string bytes = encode_weights(w);
  write_atomic(path, bytes);
  std::filesystem::path side = path;
  side += ".json";
  write_atomic(side, weights_sidecar(w, seed, bytes.size()).dump(2) + "\n");
}

inline WeightSet load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weights file " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(data);
}

}  // namespace bnn

#endif  // BNN_WEIGHTS_IO_HPP
