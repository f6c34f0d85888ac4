#include "ghostgrad/data_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "ghostgrad/rng.hpp"

namespace ghostgrad {

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof(buf), "0x%08x", v);
    return buf;
}

constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kImageMagic = 0x00000803;

}  // namespace

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8)
        throw FormatError("idx: file too short (" + std::to_string(bytes.size()) + " bytes)");
    IdxFile idx;
    idx.magic = read_be32(bytes.data());
    std::size_t ndims = 0;
    if (idx.magic == kLabelMagic) ndims = 1;
    else if (idx.magic == kImageMagic) ndims = 3;
    else throw FormatError("idx: bad magic " + hex32(idx.magic));

    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header)
        throw FormatError("idx: truncated header, need " + std::to_string(header) + " bytes, have " +
                          std::to_string(bytes.size()));
    std::size_t expect = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::uint32_t d = read_be32(bytes.data() + 4 + 4 * i);
        idx.dims.push_back(d);
        expect *= d;
    }
    const std::size_t actual = bytes.size() - header;
    if (actual != expect)
        throw FormatError("idx: payload length mismatch, expected " + std::to_string(expect) +
                          " bytes, got " + std::to_string(actual));
    idx.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return idx;
}

std::vector<std::uint8_t> serialize_idx(const IdxFile& idx) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * idx.dims.size() + idx.payload.size());
    write_be32(out, idx.magic);
    for (const std::uint32_t d : idx.dims) write_be32(out, d);
    out.insert(out.end(), idx.payload.begin(), idx.payload.end());
    return out;
}

IdxFile load_idx(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

Dataset dataset_from_idx(const IdxFile& images, const IdxFile& labels) {
    if (images.magic != kImageMagic)
        throw FormatError("dataset: image file has magic " + hex32(images.magic));
    if (labels.magic != kLabelMagic)
        throw FormatError("dataset: label file has magic " + hex32(labels.magic));
    if (images.dims[0] != labels.dims[0])
        throw FormatError("dataset: " + std::to_string(images.dims[0]) + " images but " +
                          std::to_string(labels.dims[0]) + " labels");
    Dataset ds;
    ds.count = images.dims[0];
    ds.rows = images.dims[1];
    ds.cols = images.dims[2];
    ds.images.resize(ds.count * ds.rows * ds.cols);
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        ds.images[i] = static_cast<double>(images.payload[i]) / 255.0;
    ds.labels.resize(ds.count);
    for (std::size_t i = 0; i < ds.count; ++i) {
        const std::uint8_t l = labels.payload[i];
        if (l > 9) throw FormatError("dataset: label " + std::to_string(l) + " out of 0..9");
        ds.labels[i] = l;
    }
    return ds;
}

Dataset load_idx_dataset(const std::filesystem::path& dir, const std::string& prefix) {
    const std::filesystem::path img = dir / (prefix + "-images-idx3-ubyte");
    const std::filesystem::path lab = dir / (prefix + "-labels-idx1-ubyte");
    Dataset ds = dataset_from_idx(load_idx(img), load_idx(lab));
    ds.provenance.source_hashes[img.filename().string()] = sha256_file(img);
    ds.provenance.source_hashes[lab.filename().string()] = sha256_file(lab);
    return ds;
}

Dataset rmnist_sample(const Dataset& full, std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) throw ContractError("rmnist_sample: per_class must be positive");
    std::array<std::vector<std::size_t>, 10> by_class;
    for (std::size_t i = 0; i < full.count; ++i)
        by_class[static_cast<std::size_t>(full.labels[i])].push_back(i);
    for (int cls = 0; cls < 10; ++cls)
        if (by_class[static_cast<std::size_t>(cls)].size() < per_class)
            throw ContractError("rmnist_sample: class " + std::to_string(cls) + " has only " +
                                std::to_string(by_class[static_cast<std::size_t>(cls)].size()) +
                                " samples, need " + std::to_string(per_class));

    CounterRng rng(seed, CounterRng::kData);
    std::vector<std::size_t> chosen;
    chosen.reserve(per_class * 10);
    for (int cls = 0; cls < 10; ++cls) {
        std::vector<std::size_t>& pool = by_class[static_cast<std::size_t>(cls)];
        // Fisher-Yates; only the first per_class entries matter but the full
        // shuffle keeps the draw order independent of per_class.
        for (std::size_t i = pool.size() - 1; i > 0; --i)
            std::swap(pool[i], pool[static_cast<std::size_t>(rng.next_below(i + 1))]);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_class));
    }

    const std::size_t pix = full.chans * full.rows * full.cols;
    Dataset out;
    out.count = chosen.size();
    out.chans = full.chans;
    out.rows = full.rows;
    out.cols = full.cols;
    out.images.resize(out.count * pix);
    out.labels.resize(out.count);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        std::copy_n(full.images.begin() + static_cast<std::ptrdiff_t>(chosen[i] * pix), pix,
                    out.images.begin() + static_cast<std::ptrdiff_t>(i * pix));
        out.labels[i] = full.labels[chosen[i]];
    }
    out.provenance = full.provenance;
    out.provenance.sampler_seed = seed;
    out.provenance.per_class = per_class;
    return out;
}

Dataset dataset_head(const Dataset& full, std::size_t count) {
    if (count == 0 || count >= full.count) return full;
    const std::size_t pix = full.chans * full.rows * full.cols;
    Dataset out = full;
    out.count = count;
    out.images.assign(full.images.begin(),
                      full.images.begin() + static_cast<std::ptrdiff_t>(count * pix));
    out.labels.assign(full.labels.begin(), full.labels.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
}

namespace {

// 7x5 digit bitmaps, upscaled x3 and centered on a 28x28 canvas.
const char* const kGlyphs[10][7] = {
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
};

void render_digit(int digit, CounterRng& rng, std::uint8_t* out28x28) {
    double canvas[28][28] = {};
    const int dy = static_cast<int>(rng.next_below(7)) - 3;
    const int dx = static_cast<int>(rng.next_below(7)) - 3;
    const double amp = rng.next_uniform(0.55, 1.0);
    const int r0 = (28 - 21) / 2 + dy;
    const int c0 = (28 - 15) / 2 + dx;
    for (int gr = 0; gr < 7; ++gr)
        for (int gc = 0; gc < 5; ++gc) {
            if (kGlyphs[digit][gr][gc] != '1') continue;
            for (int ur = 0; ur < 3; ++ur)
                for (int uc = 0; uc < 3; ++uc) {
                    const int r = r0 + gr * 3 + ur;
                    const int c = c0 + gc * 3 + uc;
                    if (r >= 0 && r < 28 && c >= 0 && c < 28) canvas[r][c] = amp;
                }
        }
    for (int r = 0; r < 28; ++r)
        for (int c = 0; c < 28; ++c) {
            const double v = std::clamp(canvas[r][c] + 0.12 * rng.next_normal(), 0.0, 1.0);
            out28x28[r * 28 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
}

}  // namespace

Dataset synth_digits(std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) throw ContractError("synth_digits: per_class must be positive");
    CounterRng rng(seed, CounterRng::kData);
    const std::size_t count = per_class * 10;
    std::vector<std::uint8_t> pixels(count * 28 * 28);
    std::vector<std::uint8_t> labels(count);
    // Interleave classes so any prefix is roughly balanced.
    std::size_t i = 0;
    for (std::size_t k = 0; k < per_class; ++k)
        for (int d = 0; d < 10; ++d, ++i) {
            labels[i] = static_cast<std::uint8_t>(d);
            render_digit(d, rng, pixels.data() + i * 28 * 28);
        }
    IdxFile img{kImageMagic, {static_cast<std::uint32_t>(count), 28, 28}, std::move(pixels)};
    IdxFile lab{kLabelMagic, {static_cast<std::uint32_t>(count)}, std::move(labels)};
    Dataset ds = dataset_from_idx(img, lab);
    ds.provenance.sampler_seed = seed;
    ds.provenance.source_hashes["synthetic"] = sha256_hex(serialize_idx(img));
    return ds;
}

void write_idx_dataset(const std::filesystem::path& dir, const Dataset& train,
                       const Dataset& test) {
    std::filesystem::create_directories(dir);
    auto write_pair = [&dir](const Dataset& ds, const std::string& prefix) {
        IdxFile img;
        img.magic = kImageMagic;
        img.dims = {static_cast<std::uint32_t>(ds.count), static_cast<std::uint32_t>(ds.rows),
                    static_cast<std::uint32_t>(ds.cols)};
        img.payload.resize(ds.images.size());
        for (std::size_t i = 0; i < ds.images.size(); ++i)
            img.payload[i] = static_cast<std::uint8_t>(std::lround(ds.images[i] * 255.0));
        IdxFile lab;
        lab.magic = kLabelMagic;
        lab.dims = {static_cast<std::uint32_t>(ds.count)};
        lab.payload.resize(ds.count);
        for (std::size_t i = 0; i < ds.count; ++i)
            lab.payload[i] = static_cast<std::uint8_t>(ds.labels[i]);
        for (const auto& [name, file] :
             {std::pair{prefix + "-images-idx3-ubyte", &img}, {prefix + "-labels-idx1-ubyte", &lab}}) {
            const std::vector<std::uint8_t> bytes = serialize_idx(*file);
            std::ofstream out(dir / name, std::ios::binary);
            if (!out) throw IoError("cannot write " + (dir / name).string());
            out.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
        }
    };
    write_pair(train, "train");
    write_pair(test, "t10k");
}

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), self-contained.

namespace {

constexpr std::array<std::uint32_t, 64> kSha256K = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2};

std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

struct Sha256 {
    std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                      0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    std::array<std::uint8_t, 64> block{};
    std::size_t block_len = 0;
    std::uint64_t total = 0;

    void compress(const std::uint8_t* p) {
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i) w[i] = read_be32(p + 4 * i);
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6],
                      hh = h[7];
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = hh + s1 + ch + kSha256K[static_cast<std::size_t>(i)] + w[i];
            const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = s0 + maj;
            hh = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
        h[5] += f;
        h[6] += g;
        h[7] += hh;
    }

    void update(const std::uint8_t* p, std::size_t n) {
        total += n;
        while (n > 0) {
            const std::size_t take = std::min(n, block.size() - block_len);
            std::memcpy(block.data() + block_len, p, take);
            block_len += take;
            p += take;
            n -= take;
            if (block_len == block.size()) {
                compress(block.data());
                block_len = 0;
            }
        }
    }

    std::string finish() {
        const std::uint64_t bits = total * 8;
        const std::uint8_t one = 0x80;
        update(&one, 1);
        const std::uint8_t zero = 0x00;
        while (block_len != 56) update(&zero, 1);
        std::uint8_t len[8];
        for (int i = 0; i < 8; ++i) len[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
        update(len, 8);
        std::string out;
        out.reserve(64);
        for (const std::uint32_t v : h) {
            char buf[9];
            std::snprintf(buf, sizeof(buf), "%08x", v);
            out += buf;
        }
        return out;
    }
};

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    Sha256 s;
    s.update(bytes.data(), bytes.size());
    return s.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Sha256 s;
    std::array<char, 65536> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        s.update(reinterpret_cast<const std::uint8_t*>(buf.data()),
                 static_cast<std::size_t>(in.gcount()));
    }
    return s.finish();
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("gunzip: inflateInit2 failed");
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 65536> buf;
    zs.next_in = const_cast<std::uint8_t*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gunzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

}  // namespace ghostgrad
