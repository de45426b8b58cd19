#include "terrembed/io.hpp"

#include "terrembed/error.hpp"
#include "terrembed/tensor_file.hpp"

#include <fmt/core.h>
#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <system_error>

namespace terrembed::io {

static_assert(std::endian::native == std::endian::little, "binary codecs assume a little-endian host");

void BinaryWriter::bytes(std::span<const std::uint8_t> data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }

void BinaryWriter::magic(std::string_view tag) {
    for (char c : tag) {
        buffer_.push_back(static_cast<std::uint8_t>(c));
    }
}

namespace {
template <class T>
void append_raw(std::vector<std::uint8_t>& buffer, T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buffer.insert(buffer.end(), raw, raw + sizeof(T));
}
}  // namespace

void BinaryWriter::u8(std::uint8_t v) { buffer_.push_back(v); }
void BinaryWriter::u16(std::uint16_t v) { append_raw(buffer_, v); }
void BinaryWriter::u32(std::uint32_t v) { append_raw(buffer_, v); }
void BinaryWriter::u64(std::uint64_t v) { append_raw(buffer_, v); }
void BinaryWriter::f32(float v) { append_raw(buffer_, v); }
void BinaryWriter::f64(double v) { append_raw(buffer_, v); }

const std::uint8_t* BinaryReader::take(std::size_t n) {
    if (remaining() < n) {
        fail(ErrorKind::format, fmt::format("{}: truncated (needed {} bytes at offset {}, {} left)", context_, n, pos_,
                                            remaining()));
    }
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
}

void BinaryReader::expect_magic(std::string_view tag) {
    const auto* p = take(tag.size());
    if (std::memcmp(p, tag.data(), tag.size()) != 0) {
        fail(ErrorKind::format, fmt::format("{}: bad magic, expected \"{}\"", context_, tag));
    }
}

namespace {
template <class T>
T read_raw(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}
}  // namespace

std::uint8_t BinaryReader::u8() { return *take(1); }
std::uint16_t BinaryReader::u16() { return read_raw<std::uint16_t>(take(2)); }
std::uint32_t BinaryReader::u32() { return read_raw<std::uint32_t>(take(4)); }
std::uint64_t BinaryReader::u64() { return read_raw<std::uint64_t>(take(8)); }
float BinaryReader::f32() { return read_raw<float>(take(4)); }
double BinaryReader::f64() { return read_raw<double>(take(8)); }

std::string BinaryReader::string(std::size_t length) {
    const auto* p = take(length);
    return std::string(reinterpret_cast<const char*>(p), length);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::missing_input, fmt::format("cannot open {}", path.string()));
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::missing_input, fmt::format("cannot open {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorKind::io, fmt::format("cannot write {}", tmp.string()));
        }
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) {
            fail(ErrorKind::io, fmt::format("write failed for {}", tmp.string()));
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        fail(ErrorKind::runtime, "number formatting failed");
    }
    return std::string(buf, end);
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_double(std::string_view text, std::string_view what) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        fail(ErrorKind::parse, fmt::format("{}: not a number: \"{}\"", what, text));
    }
    return v;
}

std::int64_t parse_int(std::string_view text, std::string_view what) {
    text = trim(text);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        fail(ErrorKind::parse, fmt::format("{}: not an integer: \"{}\"", what, text));
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    fail(ErrorKind::schema, fmt::format("missing column \"{}\"", name));
}

CsvTable parse_csv(std::string_view text, std::string_view context) {
    CsvTable table;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (trim(line).empty()) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        std::vector<std::string> cells;
        for (auto cell : split(line, ',')) {
            cells.emplace_back(trim(cell));
        }
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
        } else {
            table.rows.push_back(std::move(cells));
            table.line_numbers.push_back(line_no);
        }
        if (end == text.size()) {
            break;
        }
    }
    if (!have_header) {
        fail(ErrorKind::parse, fmt::format("{}: empty CSV", context));
    }
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

std::string sha256_hex(std::span<const std::uint8_t> data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) {
        fail(ErrorKind::runtime, "sha256 failed");
    }
    std::string hex;
    hex.reserve(length * 2);
    for (unsigned i = 0; i < length; ++i) {
        hex += fmt::format("{:02x}", digest[i]);
    }
    return hex;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace terrembed::io

namespace terrembed {

std::size_t NamedTensor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::vector<std::uint8_t> encode_tensors(const TensorFileFormat& format, const std::vector<NamedTensor>& tensors) {
    io::BinaryWriter w;
    w.magic(format.magic);
    w.u16(format.version);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        require(t.data.size() == t.element_count(), ErrorKind::dimension,
                fmt::format("tensor {} has {} values for its shape", t.name, t.data.size()));
        w.u16(static_cast<std::uint16_t>(t.name.size()));
        w.magic(t.name);
        w.u8(static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) {
            w.u32(d);
        }
        for (double v : t.data) {
            if (format.element == ElementType::f32) {
                w.f32(static_cast<float>(v));
            } else {
                w.f64(v);
            }
        }
    }
    return w.buffer();
}

std::vector<NamedTensor> decode_tensors(const TensorFileFormat& format, const std::vector<std::uint8_t>& bytes,
                                        const std::string& context) {
    io::BinaryReader r(bytes, context);
    r.expect_magic(format.magic);
    const auto version = r.u16();
    if (version != format.version) {
        fail(ErrorKind::unsupported_version,
             fmt::format("{}: unsupported version {} (expected {})", context, version, format.version));
    }
    const auto count = r.u32();
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.string(r.u16());
        const auto rank = r.u8();
        for (std::uint8_t d = 0; d < rank; ++d) {
            t.shape.push_back(r.u32());
        }
        const std::size_t n = t.element_count();
        const std::size_t width = format.element == ElementType::f32 ? 4 : 8;
        if (r.remaining() < n * width) {
            fail(ErrorKind::format, fmt::format("{}: truncated data for tensor {}", context, t.name));
        }
        t.data.resize(n);
        for (auto& v : t.data) {
            v = format.element == ElementType::f32 ? static_cast<double>(r.f32()) : r.f64();
        }
        out.push_back(std::move(t));
    }
    if (!r.at_end()) {
        fail(ErrorKind::format, fmt::format("{}: {} trailing bytes", context, r.remaining()));
    }
    return out;
}

}  // namespace terrembed
