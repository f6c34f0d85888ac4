#include <fstream>
#include <sstream>

#include <httplib.h>

#include "ghostgrad/data_io.hpp"

namespace ghostgrad {

namespace {

struct MnistArchive {
    const char* gz_name;
    const char* idx_name;
    std::uint32_t magic;
    std::uint32_t count;
};

constexpr MnistArchive kArchives[4] = {
    {"train-images-idx3-ubyte.gz", "train-images-idx3-ubyte", 0x00000803, 60000},
    {"train-labels-idx1-ubyte.gz", "train-labels-idx1-ubyte", 0x00000801, 60000},
    {"t10k-images-idx3-ubyte.gz", "t10k-images-idx3-ubyte", 0x00000803, 10000},
    {"t10k-labels-idx1-ubyte.gz", "t10k-labels-idx1-ubyte", 0x00000801, 10000},
};

std::map<std::string, std::string> read_checksums(const std::filesystem::path& file) {
    std::map<std::string, std::string> sums;
    std::ifstream in(file);
    if (!in) throw IoError("cannot open checksum file " + file.string());
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string digest, name;
        if (ls >> digest >> name) sums[name] = digest;
    }
    return sums;
}

std::string manual_hint(const std::string& base_url, const std::filesystem::path& dir) {
    std::string msg = "could not download MNIST from " + base_url +
                      ". Fetch the four archives manually and place the decompressed files in " +
                      dir.string() + ":";
    for (const MnistArchive& a : kArchives) msg += std::string("\n  ") + a.gz_name;
    return msg;
}

}  // namespace

FetchResult fetch_mnist(const std::filesystem::path& dir, const std::string& base_url,
                        const std::filesystem::path& checksum_file) {
    std::map<std::string, std::string> expected;
    if (!checksum_file.empty()) expected = read_checksums(checksum_file);

    // Split "host[/path]".
    std::string url = base_url;
    if (url.starts_with("http://")) url = url.substr(7);
    std::string host = url, path_prefix = "/";
    if (const std::size_t slash = url.find('/'); slash != std::string::npos) {
        host = url.substr(0, slash);
        path_prefix = url.substr(slash);
        if (path_prefix.back() != '/') path_prefix += '/';
    }

    std::filesystem::create_directories(dir);
    httplib::Client client(host);
    client.set_connection_timeout(15);
    client.set_read_timeout(60);
    client.set_follow_location(true);

    FetchResult result;
    for (const MnistArchive& a : kArchives) {
        const httplib::Result res = client.Get(path_prefix + a.gz_name);
        if (!res || res->status != 200)
            throw IoError(manual_hint(base_url, dir));
        const std::vector<std::uint8_t> gz(res->body.begin(), res->body.end());
        const std::vector<std::uint8_t> raw = gunzip(gz);

        const IdxFile idx = parse_idx(raw);
        if (idx.magic != a.magic || idx.dims[0] != a.count)
            throw FormatError(std::string("fetch: ") + a.gz_name + " has unexpected structure");

        const std::string digest = sha256_hex(raw);
        if (!expected.empty()) {
            const auto it = expected.find(a.idx_name);
            if (it == expected.end())
                throw FormatError(std::string("fetch: no checksum listed for ") + a.idx_name);
            if (it->second != digest)
                throw FormatError(std::string("fetch: checksum mismatch for ") + a.idx_name +
                                  ": expected " + it->second + ", got " + digest);
        }

        const std::filesystem::path out_path = dir / a.idx_name;
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw IoError("cannot write " + out_path.string());
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        result.files.push_back(out_path.string());
        result.sha256[a.idx_name] = digest;
    }
    return result;
}

}  // namespace ghostgrad
