#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nwp::textgen {

// Deterministic synthetic English-like corpus: raw sentences with
// capitalization, attached punctuation and digit tokens, drawn from a fixed
// template grammar over ~3000 surface forms with Zipfian word choice inside
// each class. Same seed, same corpus, on every platform. Generation stops at
// the first sentence boundary past target_words.
std::vector<std::string> generate_corpus(uint64_t seed, int64_t target_words);

} // namespace nwp::textgen
