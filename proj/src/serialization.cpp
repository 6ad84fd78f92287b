#include "ropegraph/serialization.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ropegraph/errors.hpp"

namespace ropegraph {

namespace {

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }

    template <typename T>
    void le(T value) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out_.push_back(static_cast<char>(u & 0xff));
            u = static_cast<U>(u >> 8);
        }
    }
    void u8(std::uint8_t v) { le(v); }
    void u32(std::uint32_t v) { le(v); }
    void i32(std::int32_t v) { le(v); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& in) : in_(in) {}

    // Step index reported when the input runs out (-1 = header).
    void set_section(long step) { section_ = step; }
    bool at_end() const { return pos_ == in_.size(); }

    void need(std::size_t n) {
        if (in_.size() - pos_ < n) {
            throw TruncatedFile(section_ < 0 ? std::string("file truncated in header")
                                             : "file truncated in record " + std::to_string(section_),
                                section_);
        }
    }

    template <typename T>
    T le() {
        need(sizeof(T));
        using U = std::make_unsigned_t<T>;
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u = static_cast<U>(u | static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i));
        }
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    std::uint8_t u8() { return le<std::uint8_t>(); }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::int32_t i32() { return le<std::int32_t>(); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string chars(std::size_t n) {
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    const std::string& in_;
    std::size_t pos_ = 0;
    long section_ = -1;
};

void put_image(ByteWriter& w, const Image& img) {
    for (double v : img.values) w.u8(quantize(v));
}

Image get_image(ByteReader& r, int h, int w) {
    Image img(h, w);
    r.need(img.values.size());
    for (double& v : img.values) v = dequantize(r.u8());
    return img;
}

void put_units(ByteWriter& w, const std::vector<Vec2>& units) {
    for (const Vec2& p : units) {
        w.f64(p.x);
        w.f64(p.y);
    }
}

std::vector<Vec2> get_units(ByteReader& r, std::size_t n) {
    std::vector<Vec2> units(n);
    for (Vec2& p : units) {
        p.x = r.f64();
        p.y = r.f64();
    }
    return units;
}

void check_magic(ByteReader& r, const char* magic) {
    const std::string m = r.chars(4);
    if (m != magic) throw BadMagic(std::string("expected magic '") + magic + "'");
}

void check_version(std::uint32_t got, std::uint32_t want) {
    if (got != want) {
        throw VersionMismatch("format version " + std::to_string(got) + ", expected " + std::to_string(want));
    }
}

}  // namespace

std::uint8_t quantize(double intensity) {
    const double clamped = std::clamp(intensity, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

double dequantize(std::uint8_t value) { return static_cast<double>(value) / 255.0; }

// ---------------------------------------------------------------------------
// Episodes

std::string encode_episode(const Episode& e) {
    const std::size_t n = e.goal_units.size();
    ByteWriter w;
    w.bytes("GTEP", 4);
    w.u32(kEpisodeVersion);
    w.u8(static_cast<std::uint8_t>(e.topology));
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.u32(e.task_id);
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(e.height));
    w.u32(static_cast<std::uint32_t>(e.width));
    w.u32(static_cast<std::uint32_t>(e.steps.size()));
    w.f64(e.link_length);
    put_image(w, e.goal_image);
    put_units(w, e.goal_units);
    for (const EpisodeStep& s : e.steps) {
        put_image(w, s.image);
        put_units(w, s.units);
        w.i32(s.action.pick.row);
        w.i32(s.action.pick.col);
        w.i32(s.action.place.row);
        w.i32(s.action.place.col);
    }
    put_image(w, e.final_image);
    put_units(w, e.final_units);
    return w.take();
}

Episode decode_episode(const std::string& bytes) {
    ByteReader r(bytes);
    check_magic(r, "GTEP");
    check_version(r.u32(), kEpisodeVersion);
    Episode e;
    const std::uint8_t topo = r.u8();
    if (topo > 1) throw IoError("bad topology code " + std::to_string(topo));
    e.topology = static_cast<Topology>(topo);
    r.chars(3);
    e.task_id = r.u32();
    const std::uint32_t n = r.u32();
    e.height = static_cast<int>(r.u32());
    e.width = static_cast<int>(r.u32());
    const std::uint32_t steps = r.u32();
    e.link_length = r.f64();
    e.goal_image = get_image(r, e.height, e.width);
    e.goal_units = get_units(r, n);
    for (std::uint32_t i = 0; i < steps; ++i) {
        r.set_section(static_cast<long>(i));
        EpisodeStep s;
        s.image = get_image(r, e.height, e.width);
        s.units = get_units(r, n);
        s.action.pick.row = r.i32();
        s.action.pick.col = r.i32();
        s.action.place.row = r.i32();
        s.action.place.col = r.i32();
        const Image bounds(e.height, e.width);
        if (!bounds.contains(s.action.pick) || !bounds.contains(s.action.place)) {
            throw IoError("action out of image bounds in record " + std::to_string(i));
        }
        e.steps.push_back(std::move(s));
    }
    r.set_section(static_cast<long>(steps));
    e.final_image = get_image(r, e.height, e.width);
    e.final_units = get_units(r, n);
    if (!r.at_end()) throw IoError("trailing bytes after episode");
    return e;
}

void write_episode(const Episode& episode, const std::filesystem::path& path) {
    write_file(path, encode_episode(episode));
}

Episode read_episode(const std::filesystem::path& path) {
    try {
        return decode_episode(read_file(path));
    } catch (const TruncatedFile& e) {
        throw TruncatedFile(path.string() + ": " + e.what(), e.step());
    } catch (const BadMagic& e) {
        throw BadMagic(path.string() + ": " + e.what());
    } catch (const VersionMismatch& e) {
        throw VersionMismatch(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string encode_checkpoint(const ModelParams& params) {
    const ModelHyper& h = params.hyper;
    ByteWriter w;
    w.bytes("GTWT", 4);
    w.u32(kCheckpointVersion);
    for (int v : {h.height, h.width, h.keypoints, h.crop, h.feature_channels, h.fcn_hidden, h.fcn_layers, h.kernel,
                  h.dilation_growth, h.gcn_hidden, h.gcn_out}) {
        w.i32(v);
    }
    w.f64(h.mask_sigma);
    w.f64(h.mask_truncate);
    w.f64(h.foreground_threshold);
    w.u8(h.align_goal_keypoints ? 1 : 0);
    w.u8(0);
    w.u8(0);
    w.u8(0);
    const auto arrays = parameter_list(params);
    w.u32(static_cast<std::uint32_t>(arrays.size()));
    for (const ad::Array* a : arrays) {
        w.u32(static_cast<std::uint32_t>(a->rank()));
        for (int d : a->shape()) w.u32(static_cast<std::uint32_t>(d));
        for (double v : a->values()) w.f64(v);
    }
    return w.take();
}

ModelParams decode_checkpoint(const std::string& bytes) {
    ByteReader r(bytes);
    check_magic(r, "GTWT");
    check_version(r.u32(), kCheckpointVersion);
    ModelHyper h;
    for (int* v : {&h.height, &h.width, &h.keypoints, &h.crop, &h.feature_channels, &h.fcn_hidden, &h.fcn_layers,
                   &h.kernel, &h.dilation_growth, &h.gcn_hidden, &h.gcn_out}) {
        *v = r.i32();
    }
    h.mask_sigma = r.f64();
    h.mask_truncate = r.f64();
    h.foreground_threshold = r.f64();
    h.align_goal_keypoints = r.u8() != 0;
    r.chars(3);
    ModelParams params = init_params(h, 0);
    auto arrays = parameter_list(params);
    const std::uint32_t count = r.u32();
    if (count != arrays.size()) {
        throw ShapeMismatch("checkpoint holds " + std::to_string(count) + " arrays, model needs " +
                            std::to_string(arrays.size()));
    }
    for (ad::Array* a : arrays) {
        const std::uint32_t rank = r.u32();
        ad::Shape shape(rank);
        for (int& d : shape) d = static_cast<int>(r.u32());
        if (shape != a->shape()) {
            throw ShapeMismatch("checkpoint array " + ad::shape_string(shape) + ", model expects " +
                                ad::shape_string(a->shape()));
        }
        for (double& v : a->values()) v = r.f64();
    }
    if (!r.at_end()) throw IoError("trailing bytes after checkpoint");
    return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError(path.string() + ": read failed");
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError(path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
    std::string bytes = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    bytes.reserve(bytes.size() + image.values.size());
    for (double v : image.values) bytes.push_back(static_cast<char>(quantize(v)));
    write_file(path, bytes);
}

Image read_pgm(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::istringstream is(bytes);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    if (!(is >> magic >> w >> h >> maxval) || magic != "P5" || maxval != 255 || w < 1 || h < 1) {
        throw IoError(path.string() + ": not an 8-bit binary PGM");
    }
    is.get();
    const auto offset = static_cast<std::size_t>(is.tellg());
    if (bytes.size() - offset < static_cast<std::size_t>(w) * h) throw IoError(path.string() + ": truncated PGM");
    Image img(h, w);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        img.values[i] = dequantize(static_cast<std::uint8_t>(bytes[offset + i]));
    }
    return img;
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::set<std::string>& allowed) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!allowed.contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        out[key] = value;
    }
    return out;
}

}  // namespace ropegraph
