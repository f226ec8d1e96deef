#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nwp/error.hpp"

namespace nwp {

// Vocabulary cutoff used when none is given (the usual top-15K choice).
inline constexpr int kDefaultVocabSize = 15000;

// Word <-> id bijection. Ids 0..3 are always the reserved tokens
// <unk>, <num>, <s>, </s>; regular words start at id 4.
class Vocabulary {
public:
    static constexpr int kUnk = 0;
    static constexpr int kNum = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kReserved = 4;

    Vocabulary();

    // Appends a word and returns its id. Throws DomainError on duplicates.
    int add(const std::string& word);

    // id of `word`, or -1 when absent.
    int lookup(std::string_view word) const;

    const std::string& word(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    static bool is_reserved(int id) { return id >= 0 && id < kReserved; }
    static bool is_reserved_surface(std::string_view word);

    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// Whitespace-split with leading/trailing ASCII punctuation detached into
// their own tokens, everything lowercased. No number substitution.
std::vector<std::string> tokenize_line(std::string_view line);

// True for tokens made of digits plus optional '.', ',' or '-' separators.
bool is_number_token(std::string_view token);

// tokenize_line followed by the digit rule: number tokens become <num>.
// Sentence boundary tokens are added by encode(), not here.
std::vector<std::string> normalize_line(std::string_view line);

// Keeps the k most frequent non-reserved tokens (ties broken by ascending
// lexicographic order) on top of the 4 reserved ids.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, int k);

// Token ids with <s> prepended and </s> appended; unknown words map to <unk>.
std::vector<int32_t> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// Inverse of encode for the inner tokens: strips <s>/</s>, maps ids to words.
std::vector<std::string> decode(std::span<const int32_t> ids, const Vocabulary& vocab);

struct EncodedCorpus {
    std::vector<std::vector<int32_t>> sentences; // each starts <s>, ends </s>
    int64_t token_count() const;
    int64_t target_count() const; // predicted positions: everything after <s>
};

EncodedCorpus encode_corpus(const std::vector<std::vector<std::string>>& sentences,
                            const Vocabulary& vocab);

// One training batch: up to `size` sentences in lockstep, sorted inside the
// batch by descending length, padded with </s>. Positions past a sentence's
// end are excluded from the loss via the target mask.
struct Batch {
    int size = 0;
    int max_len = 0;                // padded length (= longest sentence kept)
    std::vector<int32_t> tokens;    // size x max_len, row-major
    std::vector<int32_t> lens;      // descending
    std::vector<uint8_t> target_mask; // size x (max_len-1); 1 where a target exists
    int64_t target_count = 0;

    int32_t token(int lane, int t) const { return tokens[static_cast<size_t>(lane) * max_len + t]; }
    // Lanes 0..active-1 still have a target at step t (they are the longest ones).
    int active_at(int step) const;
};

// Sentence-aligned batches: shuffle the sentence order with `seed`, truncate
// sentences to max_len ids, partition consecutively into groups of batch_size.
// Identical seeds give identical batches.
std::vector<Batch> make_batches(const EncodedCorpus& corpus, int batch_size, int max_len,
                                uint64_t seed);

// File I/O per the external formats: corpus files are UTF-8 text with one
// sentence per line; vocabulary files one word per line, line number = id.
std::vector<std::vector<std::string>> load_normalized_lines(const std::string& path);
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

} // namespace nwp
