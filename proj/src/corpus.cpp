#include "nwp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "nwp/rng.hpp"

namespace nwp {

namespace {
const char* kReservedSurfaces[Vocabulary::kReserved] = {"<unk>", "<num>", "<s>", "</s>"};

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
} // namespace

Vocabulary::Vocabulary() {
    for (const char* w : kReservedSurfaces) add(w);
}

int Vocabulary::add(const std::string& word) {
    auto [it, inserted] = index_.emplace(word, static_cast<int>(words_.size()));
    if (!inserted) throw DomainError("Vocabulary: duplicate word '" + word + "'");
    words_.push_back(word);
    return it->second;
}

int Vocabulary::lookup(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) throw IndexError("Vocabulary: id out of range");
    return words_[static_cast<size_t>(id)];
}

bool Vocabulary::is_reserved_surface(std::string_view word) {
    for (const char* w : kReservedSurfaces)
        if (word == w) return true;
    return false;
}

std::vector<std::string> tokenize_line(std::string_view line) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        std::string_view chunk = line.substr(i, j - i);
        i = j;

        // Detach leading/trailing punctuation as single-char tokens.
        size_t lo = 0, hi = chunk.size();
        while (lo < hi && is_punct(chunk[lo])) ++lo;
        while (hi > lo && is_punct(chunk[hi - 1])) --hi;
        for (size_t p = 0; p < lo; ++p) out.emplace_back(1, chunk[p]);
        if (hi > lo) {
            std::string core(chunk.substr(lo, hi - lo));
            for (char& c : core) c = lower(c);
            out.push_back(std::move(core));
        }
        for (size_t p = hi; p < chunk.size(); ++p) out.emplace_back(1, chunk[p]);
    }
    return out;
}

bool is_number_token(std::string_view token) {
    bool has_digit = false;
    for (char c : token) {
        if (std::isdigit(static_cast<unsigned char>(c)))
            has_digit = true;
        else if (c != '.' && c != ',' && c != '-')
            return false;
    }
    return has_digit;
}

std::vector<std::string> normalize_line(std::string_view line) {
    std::vector<std::string> tokens = tokenize_line(line);
    for (std::string& t : tokens)
        if (is_number_token(t)) t = kReservedSurfaces[Vocabulary::kNum];
    return tokens;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, int k) {
    if (k < 1) throw RangeError("build_vocab: k must be >= 1");
    std::unordered_map<std::string, int64_t> counts;
    for (const auto& sent : sentences)
        for (const auto& tok : sent)
            if (!Vocabulary::is_reserved_surface(tok)) ++counts[tok];

    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int64_t>(ranked.size()) > k) ranked.resize(static_cast<size_t>(k));

    Vocabulary vocab;
    for (const auto& [word, count] : ranked) vocab.add(word);
    return vocab;
}

std::vector<int32_t> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::vector<int32_t> ids;
    ids.reserve(tokens.size() + 2);
    ids.push_back(Vocabulary::kBos);
    for (const auto& tok : tokens) {
        const int id = vocab.lookup(tok);
        ids.push_back(id < 0 ? Vocabulary::kUnk : id);
    }
    ids.push_back(Vocabulary::kEos);
    return ids;
}

std::vector<std::string> decode(std::span<const int32_t> ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    for (int32_t id : ids) {
        if (id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
        out.push_back(vocab.word(id));
    }
    return out;
}

int64_t EncodedCorpus::token_count() const {
    int64_t n = 0;
    for (const auto& s : sentences) n += static_cast<int64_t>(s.size());
    return n;
}

int64_t EncodedCorpus::target_count() const {
    int64_t n = 0;
    for (const auto& s : sentences) n += static_cast<int64_t>(s.size()) - 1;
    return n;
}

EncodedCorpus encode_corpus(const std::vector<std::vector<std::string>>& sentences,
                            const Vocabulary& vocab) {
    EncodedCorpus corpus;
    corpus.sentences.reserve(sentences.size());
    for (const auto& sent : sentences) corpus.sentences.push_back(encode(sent, vocab));
    return corpus;
}

int Batch::active_at(int step) const {
    int a = 0;
    while (a < size && lens[a] >= step + 2) ++a;
    return a;
}

std::vector<Batch> make_batches(const EncodedCorpus& corpus, int batch_size, int max_len,
                                uint64_t seed) {
    if (batch_size < 1) throw RangeError("make_batches: batch_size must be >= 1");
    if (max_len < 2) throw RangeError("make_batches: max_len must be >= 2");

    const size_t n = corpus.sentences.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (size_t i = n; i > 1; --i) { // Fisher-Yates
        const size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
    }

    std::vector<Batch> batches;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        const int bsz = static_cast<int>(std::min<size_t>(batch_size, n - start));
        std::vector<const std::vector<int32_t>*> group(static_cast<size_t>(bsz));
        for (int b = 0; b < bsz; ++b) group[static_cast<size_t>(b)] = &corpus.sentences[order[start + b]];
        // Longest-first inside the batch so active lanes form a prefix.
        std::stable_sort(group.begin(), group.end(), [&](const auto* a, const auto* b) {
            return std::min<size_t>(a->size(), max_len) > std::min<size_t>(b->size(), max_len);
        });

        Batch batch;
        batch.size = bsz;
        batch.lens.resize(static_cast<size_t>(bsz));
        int longest = 0;
        for (int b = 0; b < bsz; ++b) {
            const int len = static_cast<int>(std::min<size_t>(group[static_cast<size_t>(b)]->size(),
                                                              static_cast<size_t>(max_len)));
            batch.lens[static_cast<size_t>(b)] = len;
            longest = std::max(longest, len);
        }
        batch.max_len = longest;
        batch.tokens.assign(static_cast<size_t>(bsz) * longest, Vocabulary::kEos);
        for (int b = 0; b < bsz; ++b) {
            const auto& sent = *group[static_cast<size_t>(b)];
            for (int t = 0; t < batch.lens[static_cast<size_t>(b)]; ++t)
                batch.tokens[static_cast<size_t>(b) * longest + t] = sent[static_cast<size_t>(t)];
        }
        if (longest > 1) {
            batch.target_mask.assign(static_cast<size_t>(bsz) * (longest - 1), 0);
            for (int b = 0; b < bsz; ++b)
                for (int t = 0; t + 1 < batch.lens[static_cast<size_t>(b)]; ++t) {
                    batch.target_mask[static_cast<size_t>(b) * (longest - 1) + t] = 1;
                    ++batch.target_count;
                }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::vector<std::vector<std::string>> load_normalized_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open corpus file: " + path);
    std::vector<std::vector<std::string>> sentences;
    std::string line;
    while (std::getline(in, line)) {
        auto tokens = normalize_line(line);
        if (!tokens.empty()) sentences.push_back(std::move(tokens));
    }
    return sentences;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DomainError("cannot write vocabulary file: " + path);
    for (const auto& w : vocab.words()) out << w << '\n';
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open vocabulary file: " + path);
    Vocabulary vocab;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        if (lineno < Vocabulary::kReserved) {
            if (line != vocab.word(lineno))
                throw FormatError("vocabulary file: line " + std::to_string(lineno) +
                                  " must be the reserved token " + vocab.word(lineno));
        } else if (!line.empty()) {
            vocab.add(line);
        }
        ++lineno;
    }
    if (lineno < Vocabulary::kReserved)
        throw FormatError("vocabulary file: missing reserved tokens");
    return vocab;
}

} // namespace nwp
