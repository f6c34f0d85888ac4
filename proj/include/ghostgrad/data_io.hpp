#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ghostgrad/models.hpp"

namespace ghostgrad {

// IDX container (the MNIST binary layout): 4-byte magic, big-endian 32-bit
// sizes, raw payload. Only the two unsigned-byte magics are accepted:
// 0x00000801 (labels, 1 dim) and 0x00000803 (images, 3 dims).
struct IdxFile {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;
};

IdxFile parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxFile& idx);
IdxFile load_idx(const std::filesystem::path& path);

struct DatasetProvenance {
    std::map<std::string, std::string> source_hashes;  // file name -> sha256 hex
    std::uint64_t sampler_seed = 0;
    std::size_t per_class = 0;
};

// Images scaled to [0,1] by /255, labels 0..9.
struct Dataset {
    std::size_t count = 0;
    std::size_t chans = 1;
    std::size_t rows = 28;
    std::size_t cols = 28;
    std::vector<double> images;
    std::vector<int> labels;
    DatasetProvenance provenance;

    BatchView view() const { return {images, labels, count, chans, rows, cols}; }
};

Dataset dataset_from_idx(const IdxFile& images, const IdxFile& labels);

// Loads <dir>/<prefix>-images-idx3-ubyte and <dir>/<prefix>-labels-idx1-ubyte
// (prefix "train" or "t10k"), recording file hashes in provenance.
Dataset load_idx_dataset(const std::filesystem::path& dir, const std::string& prefix);

// Exactly per_class samples of each class, drawn without replacement via a
// seeded Fisher-Yates shuffle; deterministic for a fixed (seed, dataset).
Dataset rmnist_sample(const Dataset& full, std::size_t per_class, std::uint64_t seed);

// First count samples (whole set when count = 0 or >= size).
Dataset dataset_head(const Dataset& full, std::size_t count);

// Deterministic MNIST-format stand-in: glyph prototypes per digit with random
// shifts, intensity jitter and pixel noise. Useful where the real files are
// unavailable; the layout, value ranges and label set match MNIST exactly.
Dataset synth_digits(std::size_t per_class, std::uint64_t seed);

// Writes train/t10k image+label IDX files for a synthetic dataset.
void write_idx_dataset(const std::filesystem::path& dir, const Dataset& train,
                       const Dataset& test);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

// Inflates a gzip stream (zlib wrapper with the gzip header).
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);

struct FetchResult {
    std::vector<std::string> files;       // idx files written
    std::map<std::string, std::string> sha256;  // name -> digest of decompressed bytes
};

// Downloads the four MNIST archives from base_url (plain HTTP), inflates and
// structurally validates them, writes the IDX files into dir and records
// digests. When checksum_file is non-empty it must list "<sha256hex>  <name>"
// lines; mismatches raise FormatError. Network failure raises IoError with
// manual-download instructions.
FetchResult fetch_mnist(const std::filesystem::path& dir, const std::string& base_url,
                        const std::filesystem::path& checksum_file);

}  // namespace ghostgrad
