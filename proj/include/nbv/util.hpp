#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace nbv {

// Deterministic RNG wrapper. The raw mt19937_64 stream is pinned by the
// standard; the distribution helpers below are hand-rolled because the
// std::uniform_* distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Rejection keeps it unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
};

// Runs fn(begin, end) over chunks of [0, n) across the thread pool; falls
// back to a single call when the machine has one hardware thread or n is
// small. Chunks are fixed so results must not depend on partitioning.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain = 1024);

int hardware_threads();

// Shortest round-trip decimal form of a double (std::to_chars).
std::string format_double(double v);

std::string base64_encode(const std::uint8_t* data, std::size_t n);
std::string base64_encode(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> base64_decode(const std::string& text);  // throws Error

// Little-endian byte stream helpers. The engine's binary formats are defined
// little-endian; this build targets little-endian hosts.
struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    raw(&v, sizeof v);
  }
};

struct ByteReader {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t off = 0;

  ByteReader(const std::uint8_t* data, std::size_t size) : p(data), n(size) {}
  explicit ByteReader(const std::vector<std::uint8_t>& v) : p(v.data()), n(v.size()) {}

  void raw(void* out, std::size_t count);
  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    raw(&v, sizeof v);
    return v;
  }
  std::size_t remaining() const { return n - off; }
};

}  // namespace nbv
