#include "nwp/modelstore.hpp"

#include <cstring>
#include <fstream>

#include "nwp/half.hpp"

namespace nwp {
namespace {

constexpr char kMagic[4] = {'N', 'W', 'P', 'M'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_f32(std::vector<uint8_t>& out, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("model file: " + what + " at offset " + std::to_string(pos));
    }
    void need(size_t n) const {
        if (pos + n > buf.size()) fail("unexpected end of file (need " + std::to_string(n) + " bytes)");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = static_cast<uint32_t>(buf[pos]) | (static_cast<uint32_t>(buf[pos + 1]) << 8) |
                     (static_cast<uint32_t>(buf[pos + 2]) << 16) |
                     (static_cast<uint32_t>(buf[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    float f32() {
        const uint32_t v = u32();
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

std::vector<uint8_t> serialize(const LmParams<float>& params, const Vocabulary& vocab) {
    if (vocab.size() != params.hyper.vocab_size)
        throw ShapeError("save_model: vocabulary size does not match model");
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kModelFormatVersion);
    put_u32(out, static_cast<uint32_t>(params.parameterization));
    put_u32(out, static_cast<uint32_t>(params.hyper.dim));
    put_u32(out, static_cast<uint32_t>(params.hyper.shared_dim));
    put_u32(out, static_cast<uint32_t>(params.hyper.rank));
    put_u32(out, static_cast<uint32_t>(params.hyper.vocab_size));
    put_u32(out, static_cast<uint32_t>(params.dtype));

    put_u32(out, static_cast<uint32_t>(vocab.size()));
    for (const auto& w : vocab.words()) {
        put_u32(out, static_cast<uint32_t>(w.size()));
        out.insert(out.end(), w.begin(), w.end());
    }

    const auto tensors = named_tensors(params);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, mat] : tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<uint32_t>(params.dtype));
        put_u32(out, 2); // ndims: all tensors are stored as matrices
        put_u32(out, static_cast<uint32_t>(mat->rows));
        put_u32(out, static_cast<uint32_t>(mat->cols));
        if (params.dtype == Dtype::kF32) {
            for (float v : mat->data) put_f32(out, v);
        } else {
            for (float v : mat->data) put_u16(out, f16_encode(v));
        }
    }
    return out;
}

} // namespace

uint64_t save_model(const LmParams<float>& params, const Vocabulary& vocab,
                    const std::string& path) {
    const std::vector<uint8_t> bytes = serialize(params, vocab);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("save_model: cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DomainError("save_model: write failed for " + path);
    return bytes.size();
}

std::pair<LmParams<float>, Vocabulary> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("load_model: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf};

    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) r.fail("bad magic (not an NWPM file)");
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != kModelFormatVersion)
        throw FormatError("model file: unsupported version " + std::to_string(version));

    const uint32_t ptag = r.u32();
    if (ptag > 2) r.fail("unknown parameterization tag " + std::to_string(ptag));
    Hyperparams hyper;
    hyper.dim = static_cast<int>(r.u32());
    hyper.shared_dim = static_cast<int>(r.u32());
    hyper.rank = static_cast<int>(r.u32());
    hyper.vocab_size = static_cast<int>(r.u32());
    const uint32_t dtag = r.u32();
    if (dtag > 1) r.fail("unknown dtype tag " + std::to_string(dtag));

    const uint32_t word_count = r.u32();
    if (static_cast<int>(word_count) != hyper.vocab_size)
        r.fail("vocabulary count does not match header vocab_size");
    Vocabulary vocab;
    for (uint32_t i = 0; i < word_count; ++i) {
        const uint32_t len = r.u32();
        const std::string w = r.str(len);
        if (i < Vocabulary::kReserved) {
            if (w != vocab.word(static_cast<int>(i))) r.fail("reserved token mismatch: '" + w + "'");
        } else {
            vocab.add(w);
        }
    }

    LmParams<float> params;
    try {
        params = allocate_params<float>(static_cast<Parameterization>(ptag), hyper);
    } catch (const Error& e) {
        throw FormatError(std::string("model file: invalid header: ") + e.what());
    }
    params.dtype = static_cast<Dtype>(dtag);

    auto tensors = named_tensors(params);
    const uint32_t tensor_count = r.u32();
    if (tensor_count != tensors.size())
        r.fail("tensor count " + std::to_string(tensor_count) + ", expected " +
               std::to_string(tensors.size()));
    for (uint32_t i = 0; i < tensor_count; ++i) {
        const uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        Mat<float>* mat = nullptr;
        for (auto& [tname, tmat] : tensors)
            if (tname == name) mat = tmat;
        if (!mat) r.fail("unknown tensor '" + name + "'");
        const uint32_t tdtag = r.u32();
        if (tdtag != dtag) r.fail("tensor '" + name + "' dtype differs from header");
        const uint32_t ndims = r.u32();
        if (ndims != 2) r.fail("tensor '" + name + "' has unsupported ndims");
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        if (static_cast<int>(rows) != mat->rows || static_cast<int>(cols) != mat->cols)
            r.fail("tensor '" + name + "' shape " + std::to_string(rows) + "x" +
                   std::to_string(cols) + " does not match header-implied shape");
        if (dtag == 0) {
            for (float& v : mat->data) v = r.f32();
        } else {
            for (float& v : mat->data) v = f16_decode(r.u16());
        }
    }
    if (r.pos != buf.size()) r.fail("trailing bytes after last tensor");
    return {std::move(params), std::move(vocab)};
}

FileLayout file_layout(const LmParams<float>& params, const Vocabulary& vocab) {
    FileLayout layout;
    int64_t overhead = 4 + 4 + 6 * 4; // magic, version, header words
    overhead += 4;                    // vocab count
    for (const auto& w : vocab.words()) overhead += 4 + static_cast<int64_t>(w.size());
    overhead += 4; // tensor count
    const int elem = dtype_bytes(params.dtype);
    for (const auto& [name, mat] : named_tensors(params)) {
        overhead += 4 + static_cast<int64_t>(name.size()) + 4 + 4 + 2 * 4;
        TensorLayout t;
        t.name = name;
        t.params = static_cast<int64_t>(mat->size());
        t.payload_bytes = t.params * elem;
        layout.tensors.push_back(std::move(t));
    }
    layout.overhead_bytes = overhead;
    layout.total_bytes = overhead;
    for (const auto& t : layout.tensors) layout.total_bytes += t.payload_bytes;
    return layout;
}

} // namespace nwp
