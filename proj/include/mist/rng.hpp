#ifndef MIST_RNG_HPP
#define MIST_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace mist::rng {

// std::shuffle delegates to an implementation-defined distribution, so its
// output differs across standard libraries. Fold assignment must be
// reproducible everywhere, so we pin the generator (mt19937_64) and the
// shuffle (Fisher-Yates with modulo rejection sampling).

inline std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t draw;
  do {
    draw = gen();
  } while (draw >= limit);
  return draw % bound;
}

template <typename T>
void shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace mist::rng

#endif
