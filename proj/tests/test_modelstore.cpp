#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nwp/compress.hpp"
#include "nwp/modelstore.hpp"

using namespace nwp;

namespace {

Vocabulary sized_vocab(int total) {
    Vocabulary v;
    for (int i = Vocabulary::kReserved; i < total; ++i) v.add("word" + std::to_string(i));
    return v;
}

struct TempFile {
    std::string path;
    explicit TempFile(const char* name) : path(std::string("/tmp/") + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

bool params_identical(const LmParams<float>& a, const LmParams<float>& b) {
    if (a.parameterization != b.parameterization || a.dtype != b.dtype) return false;
    auto ta = named_tensors(a);
    auto tb = named_tensors(b);
    if (ta.size() != tb.size()) return false;
    for (size_t i = 0; i < ta.size(); ++i)
        if (ta[i].second->data != tb[i].second->data) return false;
    return true;
}

} // namespace

TEST_SUITE("modelstore") {

TEST_CASE("f32 round trip is bit identical") {
    for (auto param : {Parameterization::kDense, Parameterization::kShared,
                       Parameterization::kSharedLowRank}) {
        Hyperparams h{.dim = 6, .vocab_size = 12, .shared_dim = 5,
                      .rank = param == Parameterization::kSharedLowRank ? 3 : 0};
        const LmParams<float> model = init_params(param, h, 42);
        const Vocabulary vocab = sized_vocab(12);
        TempFile f("nwp_roundtrip.nwpm");
        const uint64_t bytes = save_model(model, vocab, f.path);
        CHECK(bytes == std::filesystem::file_size(f.path));
        const auto [loaded, loaded_vocab] = load_model(f.path);
        CHECK(params_identical(model, loaded));
        REQUIRE(loaded_vocab.size() == vocab.size());
        for (int i = 0; i < vocab.size(); ++i) CHECK(loaded_vocab.word(i) == vocab.word(i));
    }
}

TEST_CASE("f16 round trip is bit identical after quantization") {
    const LmParams<float> model =
        quantize_model(init_dense(Hyperparams{.dim = 5, .vocab_size = 10}, 3));
    const Vocabulary vocab = sized_vocab(10);
    TempFile f("nwp_f16_roundtrip.nwpm");
    save_model(model, vocab, f.path);
    const auto [loaded, loaded_vocab] = load_model(f.path);
    CHECK(loaded.dtype == Dtype::kF16);
    CHECK(params_identical(model, loaded));

    // saving the loaded model reproduces the same bytes
    TempFile g("nwp_f16_again.nwpm");
    save_model(loaded, loaded_vocab, g.path);
    std::ifstream a(f.path, std::ios::binary), b(g.path, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("file size accounting matches the actual file") {
    const LmParams<float> model = init_dense(Hyperparams{.dim = 7, .vocab_size = 20}, 5);
    const Vocabulary vocab = sized_vocab(20);
    TempFile f("nwp_sizes.nwpm");
    const uint64_t bytes = save_model(model, vocab, f.path);
    const SizeReport report = size_report(model, vocab);
    CHECK(static_cast<uint64_t>(report.total_bytes) == bytes);

    // f16 payload is exactly half; the overhead is unchanged
    const LmParams<float> q = quantize_model(model);
    TempFile g("nwp_sizes16.nwpm");
    const uint64_t qbytes = save_model(q, vocab, g.path);
    const SizeReport qreport = size_report(q, vocab);
    CHECK(static_cast<uint64_t>(qreport.total_bytes) == qbytes);
    CHECK(qreport.header_bytes == report.header_bytes);
    CHECK((report.total_bytes - report.header_bytes) ==
          2 * (qreport.total_bytes - qreport.header_bytes));
}

TEST_CASE("corrupted files are rejected with a diagnostic") {
    const LmParams<float> model = init_dense(Hyperparams{.dim = 4, .vocab_size = 8}, 1);
    const Vocabulary vocab = sized_vocab(8);
    TempFile f("nwp_corrupt.nwpm");
    save_model(model, vocab, f.path);

    auto mutate = [&](size_t offset, char value) {
        std::fstream s(f.path, std::ios::binary | std::ios::in | std::ios::out);
        s.seekp(static_cast<std::streamoff>(offset));
        s.put(value);
    };

    SUBCASE("bad magic") {
        mutate(0, 'X');
        CHECK_THROWS_AS(load_model(f.path), FormatError);
    }
    SUBCASE("unknown version") {
        mutate(4, 9);
        CHECK_THROWS_WITH_AS(load_model(f.path), doctest::Contains("version"), FormatError);
    }
    SUBCASE("truncated file") {
        std::filesystem::resize_file(f.path, std::filesystem::file_size(f.path) / 2);
        CHECK_THROWS_WITH_AS(load_model(f.path), doctest::Contains("offset"), FormatError);
    }
    SUBCASE("trailing garbage") {
        std::ofstream s(f.path, std::ios::binary | std::ios::app);
        s.put('\0');
        s.close();
        CHECK_THROWS_AS(load_model(f.path), FormatError);
    }
}

} // TEST_SUITE
