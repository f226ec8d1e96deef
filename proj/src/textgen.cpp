#include "nwp/textgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nwp/rng.hpp"

namespace nwp::textgen {
namespace {

// Word class with Zipf(1.07) sampling over its surfaces.
struct WordClass {
    std::vector<std::string> words;
    std::vector<double> cdf;

    void finalize() {
        cdf.resize(words.size());
        double acc = 0;
        for (size_t r = 0; r < words.size(); ++r) {
            acc += 1.0 / std::pow(static_cast<double>(r) + 2.0, 1.07);
            cdf[r] = acc;
        }
        for (double& v : cdf) v /= acc;
    }
    const std::string& sample(Rng& rng) const {
        const double u = rng.next_double();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        return words[static_cast<size_t>(it - cdf.begin())];
    }
};

// Pronounceable stems from onset+vowel+coda syllables, deduplicated, built
// with a fixed seed so the lexicon is identical for every corpus seed.
std::vector<std::string> make_stems(Rng& rng, size_t count, const std::set<std::string>& taken) {
    static const char* kOnsets[] = {"b",  "d",  "f",  "g",  "h",  "k",  "l",  "m",  "n",  "p",
                                    "r",  "s",  "t",  "v",  "w",  "br", "cl", "cr", "dr", "fl",
                                    "gr", "pl", "pr", "sh", "sl", "sp", "st", "th", "tr", "ch"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ee", "oa", "oo", "ou"};
    static const char* kCodas[] = {"",   "b",  "ck", "d",  "g",  "l",  "m",  "n",  "nd", "ng",
                                   "nk", "nt", "p",  "r",  "rd", "rn", "s",  "sh", "st", "t"};
    std::set<std::string> seen = taken;
    std::vector<std::string> out;
    while (out.size() < count) {
        std::string s = kOnsets[rng.next_below(std::size(kOnsets))];
        s += kVowels[rng.next_below(std::size(kVowels))];
        s += kCodas[rng.next_below(std::size(kCodas))];
        if (rng.next_double() < 0.35) { // second syllable
            s += kOnsets[rng.next_below(std::size(kOnsets))];
            s += kVowels[rng.next_below(std::size(kVowels))];
            s += kCodas[rng.next_below(std::size(kCodas))];
        }
        if (s.size() < 3 || s.size() > 11) continue;
        if (seen.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

struct Lexicon {
    WordClass det, pron, prep, conj, adv, adj, noun_sg, noun_pl, verb_t, verb_i, name;

    Lexicon() {
        Rng rng(0xC0FFEE5EEDull); // fixed: the lexicon never varies
        det.words = {"the", "a",  "this", "that",  "my",    "your", "his",    "her",
                     "its", "our", "their", "some", "every", "each", "another", "one"};
        pron.words = {"i", "you", "he", "she", "it", "we", "they"};
        prep.words = {"of", "in", "on", "at", "by", "with", "from", "into", "over", "under",
                      "about", "near", "through", "across"};
        conj.words = {"and", "but", "or", "so", "because", "while", "when", "if"};

        std::set<std::string> taken;
        auto grab = [&](size_t n) {
            auto stems = make_stems(rng, n, taken);
            for (const auto& s : stems) taken.insert(s);
            return stems;
        };
        for (const auto& s : grab(90)) adv.words.push_back(s + "ly");
        adj.words = grab(260);
        for (const auto& s : grab(850)) {
            noun_sg.words.push_back(s);
            noun_pl.words.push_back(s + "s");
        }
        for (const auto& s : grab(200)) verb_t.words.push_back(s + (s.back() == 'e' ? "d" : "ed"));
        for (const auto& s : grab(140)) verb_i.words.push_back(s + (s.back() == 'e' ? "d" : "ed"));
        for (auto& s : grab(170)) {
            s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
            name.words.push_back(s);
        }
        for (WordClass* c : {&det, &pron, &prep, &conj, &adv, &adj, &noun_sg, &noun_pl, &verb_t,
                             &verb_i, &name})
            c->finalize();
    }
};

const Lexicon& lexicon() {
    static const Lexicon lex;
    return lex;
}

void emit_np(Rng& rng, std::vector<std::string>& words) {
    const Lexicon& lex = lexicon();
    const double u = rng.next_double();
    if (u < 0.32) {
        words.push_back(lex.det.sample(rng));
        words.push_back(lex.noun_sg.sample(rng));
    } else if (u < 0.60) {
        words.push_back(lex.det.sample(rng));
        words.push_back(lex.adj.sample(rng));
        words.push_back(lex.noun_sg.sample(rng));
    } else if (u < 0.72) {
        words.push_back(lex.name.sample(rng));
    } else if (u < 0.82) {
        words.push_back(lex.pron.sample(rng));
    } else if (u < 0.90) {
        words.push_back(lex.det.sample(rng));
        words.push_back(lex.noun_sg.sample(rng));
        words.push_back(lex.prep.sample(rng));
        words.push_back(lex.det.sample(rng));
        words.push_back(lex.noun_sg.sample(rng));
    } else {
        // counted plural: "the 12 things"
        words.push_back(lex.det.sample(rng));
        words.push_back(std::to_string(1 + rng.next_below(99)));
        words.push_back(lex.noun_pl.sample(rng));
    }
}

void emit_vp(Rng& rng, std::vector<std::string>& words) {
    const Lexicon& lex = lexicon();
    const double u = rng.next_double();
    if (u < 0.18) {
        words.push_back(lex.verb_i.sample(rng));
        words.push_back(lex.adv.sample(rng));
    } else if (u < 0.30) {
        words.push_back(lex.verb_i.sample(rng));
    } else if (u < 0.72) {
        words.push_back(lex.verb_t.sample(rng));
        emit_np(rng, words);
    } else {
        words.push_back(lex.verb_t.sample(rng));
        emit_np(rng, words);
        words.push_back(lex.prep.sample(rng));
        emit_np(rng, words);
    }
}

std::string render_sentence(Rng& rng, int64_t* word_count) {
    const Lexicon& lex = lexicon();
    std::vector<std::string> words;
    emit_np(rng, words);
    emit_vp(rng, words);
    const double u = rng.next_double();
    if (u < 0.22) { // compound sentence
        words.back() += ",";
        words.push_back(lex.conj.sample(rng));
        emit_np(rng, words);
        emit_vp(rng, words);
    }
    *word_count += static_cast<int64_t>(words.size());

    words[0][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(words[0][0])));
    const double e = rng.next_double();
    const char* end = e < 0.82 ? "." : (e < 0.93 ? "!" : "?");
    std::string line;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) line += ' ';
        line += words[i];
    }
    line += end;
    return line;
}

} // namespace

std::vector<std::string> generate_corpus(uint64_t seed, int64_t target_words) {
    Rng rng(seed);
    std::vector<std::string> lines;
    int64_t words = 0;
    while (words < target_words) lines.push_back(render_sentence(rng, &words));
    return lines;
}

} // namespace nwp::textgen
