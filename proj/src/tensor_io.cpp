#include "aacn/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace aacn {

namespace {

constexpr char kTensorMagic[4] = {'A', 'A', 'C', 'N'};
constexpr char kCheckpointMagic[4] = {'A', 'A', 'C', 'W'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError(IoErrorCode::truncated, "truncated while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32_payload(std::ostream& os, const std::vector<double>& data) {
    std::vector<unsigned char> buf(data.size() * 4);
    for (size_t i = 0; i < data.size(); ++i) {
        const float f = static_cast<float>(data[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        buf[i * 4 + 0] = static_cast<unsigned char>(bits & 0xff);
        buf[i * 4 + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
        buf[i * 4 + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
        buf[i * 4 + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> get_f32_payload(std::istream& is, size_t count, const std::string& what) {
    std::vector<unsigned char> buf(count * 4);
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
        throw IoError(IoErrorCode::truncated, "truncated payload in " + what);
    std::vector<double> data(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = static_cast<uint32_t>(buf[i * 4 + 0]) | (static_cast<uint32_t>(buf[i * 4 + 1]) << 8) |
                        (static_cast<uint32_t>(buf[i * 4 + 2]) << 16) | (static_cast<uint32_t>(buf[i * 4 + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        data[i] = static_cast<double>(f);
    }
    return data;
}

void check_magic(std::istream& is, const char expected[4], const std::string& what) {
    char magic[4];
    if (!is.read(magic, 4)) throw IoError(IoErrorCode::truncated, "file too short for magic in " + what);
    if (std::memcmp(magic, expected, 4) != 0)
        throw IoError(IoErrorCode::bad_magic, "bad magic in " + what + " (expected '" +
                                                  std::string(expected, 4) + "', got '" + std::string(magic, 4) + "')");
}

void write_tensor_body(std::ostream& os, const Tensor& t) {
    put_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
    put_f32_payload(os, t.data);
}

Tensor read_tensor_body(std::istream& is, const std::string& what) {
    const uint32_t rank = get_u32(is, what + " rank");
    if (rank > 8) throw IoError(IoErrorCode::malformed, "implausible rank " + std::to_string(rank) + " in " + what);
    std::vector<int> shape(rank);
    long long count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        const uint32_t d = get_u32(is, what + " dims");
        shape[i] = static_cast<int>(d);
        count *= static_cast<long long>(d);
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = get_f32_payload(is, static_cast<size_t>(count), what);
    return t;
}

} // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "' for writing");
    os.write(kTensorMagic, 4);
    put_u32(os, kTensorFileVersion);
    write_tensor_body(os, t);
    if (!os) throw IoError(IoErrorCode::open_failed, "write failed for '" + path.string() + "'");
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "'");
    check_magic(is, kTensorMagic, path.string());
    const uint32_t version = get_u32(is, path.string() + " version");
    if (version != kTensorFileVersion)
        throw IoError(IoErrorCode::version_mismatch,
                      "unsupported tensor file version " + std::to_string(version) + " in " + path.string());
    Tensor t = read_tensor_body(is, path.string());
    // A well-formed file ends exactly at the payload.
    char extra;
    if (is.read(&extra, 1))
        throw IoError(IoErrorCode::malformed, "trailing bytes after payload in " + path.string());
    return t;
}

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "' for writing");
    os.write(kCheckpointMagic, 4);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor_body(os, tensor);
    }
    if (!os) throw IoError(IoErrorCode::open_failed, "write failed for '" + path.string() + "'");
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "'");
    check_magic(is, kCheckpointMagic, path.string());
    const uint32_t version = get_u32(is, path.string() + " version");
    if (version != kCheckpointVersion)
        throw IoError(IoErrorCode::version_mismatch,
                      "unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
    const uint32_t count = get_u32(is, path.string() + " parameter count");
    NamedTensors out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(is, path.string() + " name length");
        if (name_len > 4096) throw IoError(IoErrorCode::malformed, "implausible name length in " + path.string());
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw IoError(IoErrorCode::truncated, "truncated parameter name in " + path.string());
        out.emplace_back(std::move(name), read_tensor_body(is, path.string()));
    }
    return out;
}

void save_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    NamedTensors named;
    named.reserve(params.size());
    for (const Parameter* p : params) named.emplace_back(p->name, p->value);
    write_checkpoint(path, named);
}

void load_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    NamedTensors named = read_checkpoint(path);
    if (named.size() != params.size())
        throw IoError(IoErrorCode::malformed, "checkpoint '" + path.string() + "' holds " +
                                                  std::to_string(named.size()) + " parameters, expected " +
                                                  std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        if (named[i].first != params[i]->name)
            throw IoError(IoErrorCode::malformed, "checkpoint parameter '" + named[i].first + "' where '" +
                                                      params[i]->name + "' was expected");
        if (named[i].second.shape != params[i]->value.shape)
            throw IoError(IoErrorCode::malformed, "shape mismatch for parameter '" + named[i].first + "'");
        params[i]->value = std::move(named[i].second);
        params[i]->zero_grad();
    }
}

void write_pgm(const std::filesystem::path& path, const AttentionMap& map) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "' for writing");
    os << "P5\n" << map.width << " " << map.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(map.width));
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const double v = std::clamp(map.at(y, x), 0.0, 1.0);
            row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        os.write(reinterpret_cast<const char*>(row.data()), map.width);
    }
    if (!os) throw IoError(IoErrorCode::open_failed, "write failed for '" + path.string() + "'");
}

} // namespace aacn
