#include "geez/data.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "geez/utf8.hpp"

namespace geez::data {

LabelCodec LabelCodec::from_chars(const std::vector<std::uint32_t>& chars) {
    LabelCodec c;
    c.chars_ = chars;
    for (std::size_t i = 0; i < chars.size(); ++i) {
        if (!c.index_.emplace(chars[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("charset: duplicate character at index " +
                                        std::to_string(i));
        }
    }
    return c;
}

LabelCodec LabelCodec::load(const std::filesystem::path& charset_file) {
    std::ifstream in(charset_file);
    if (!in) throw std::runtime_error("cannot open charset file " + charset_file.string());
    std::vector<std::uint32_t> chars;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cps = utf8_decode(line);
        if (cps.size() != 1) {
            throw std::runtime_error("charset line " + std::to_string(chars.size() + 1) +
                                     " must hold exactly one character");
        }
        chars.push_back(cps[0]);
    }
    return from_chars(chars);
}

void LabelCodec::save(const std::filesystem::path& charset_file) const {
    std::ofstream out(charset_file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write charset file " + charset_file.string());
    for (std::uint32_t cp : chars_) {
        std::string s;
        utf8_append(s, cp);
        out << s << '\n';
    }
}

std::vector<int> LabelCodec::encode(const std::string& label) const {
    const auto cps = utf8_decode(label);
    std::vector<int> out;
    out.reserve(cps.size());
    for (std::uint32_t cp : cps) {
        auto it = index_.find(cp);
        if (it == index_.end()) {
            std::string ch;
            utf8_append(ch, cp);
            throw std::invalid_argument("label character '" + ch + "' not in charset");
        }
        out.push_back(it->second);
    }
    return out;
}

std::string LabelCodec::decode(const std::vector<int>& indices) const {
    std::string out;
    for (int i : indices) {
        if (i < 0 || i >= size()) {
            throw std::invalid_argument("class index " + std::to_string(i) + " out of range");
        }
        utf8_append(out, chars_[static_cast<std::size_t>(i)]);
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, const PgmImage& img) {
    if (static_cast<std::size_t>(img.height) * img.width != img.bytes.size()) {
        throw std::invalid_argument("write_pgm: byte count does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.bytes.data()),
              static_cast<std::streamsize>(img.bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

namespace {

// Next header token, skipping whitespace and # comments.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

}  // namespace

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const std::string magic = pgm_token(in);
    if (magic != "P5" && magic != "P2") {
        throw std::runtime_error(path.string() + ": not a P5/P2 PGM file");
    }
    PgmImage img;
    try {
        img.width = std::stoi(pgm_token(in));
        img.height = std::stoi(pgm_token(in));
        const int maxval = std::stoi(pgm_token(in));
        if (maxval != 255) {
            throw std::runtime_error("maxval must be 255");
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": bad PGM header (" + e.what() + ")");
    }
    if (img.width <= 0 || img.height <= 0) {
        throw std::runtime_error(path.string() + ": bad PGM dimensions");
    }
    const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
    img.bytes.resize(count);
    if (magic == "P5") {
        in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count) {
            throw std::runtime_error(path.string() + ": truncated PGM data");
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::string tok = pgm_token(in);
            int v = -1;
            try {
                v = std::stoi(tok);
            } catch (const std::exception&) {
            }
            if (v < 0 || v > 255) {
                throw std::runtime_error(path.string() + ": bad P2 pixel value");
            }
            img.bytes[i] = static_cast<std::uint8_t>(v);
        }
    }
    return img;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, const LabelCodec& codec) {
    const auto tsv = dir / "labels.tsv";
    std::ifstream in(tsv);
    if (!in) throw std::runtime_error("cannot open " + tsv.string());

    std::vector<Sample> out;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::array<std::string, 4> cols;
        std::size_t start = 0;
        for (int k = 0; k < 4; ++k) {
            const std::size_t tab = line.find('\t', start);
            if (k < 3 && tab == std::string::npos) {
                throw std::runtime_error(tsv.string() + ":" + std::to_string(row) +
                                         ": expected 4 tab-separated columns");
            }
            cols[static_cast<std::size_t>(k)] =
                line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
            start = tab + 1;
        }

        Sample s;
        s.label = cols[1];
        s.writer_id = cols[2];
        s.style_id = cols[3];
        try {
            codec.encode(s.label);
        } catch (const std::exception& e) {
            throw std::runtime_error(tsv.string() + ":" + std::to_string(row) + ": " + e.what());
        }

        const PgmImage img = read_pgm(dir / cols[0]);
        s.height = img.height;
        s.width = img.width;
        s.pixels.resize(img.bytes.size());
        double mean = 0.0;
        for (std::size_t i = 0; i < img.bytes.size(); ++i) {
            s.pixels[i] = static_cast<double>(img.bytes[i]) / 255.0;
            mean += s.pixels[i];
        }
        mean /= static_cast<double>(s.pixels.size());
        if (mean > 0.5) {
            for (double& v : s.pixels) v = 1.0 - v;
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream tsv(dir / "labels.tsv", std::ios::binary);
    if (!tsv) throw std::runtime_error("cannot write labels.tsv under " + dir.string());
    int counter = 0;
    for (const Sample& s : samples) {
        char name[32];
        std::snprintf(name, sizeof(name), "images/%06d.pgm", counter++);
        PgmImage img;
        img.height = s.height;
        img.width = s.width;
        img.bytes.resize(s.pixels.size());
        for (std::size_t i = 0; i < s.pixels.size(); ++i) {
            img.bytes[i] = static_cast<std::uint8_t>(std::lround(s.pixels[i] * 255.0));
        }
        write_pgm(dir / name, img);
        tsv << name << '\t' << s.label << '\t' << s.writer_id << '\t' << s.style_id << '\n';
    }
}

std::vector<double> resize_bilinear(const std::vector<double>& pixels, int h, int w,
                                    int target_h, int target_w) {
    if (h <= 0 || w <= 0 || static_cast<std::size_t>(h) * w != pixels.size()) {
        throw std::invalid_argument("resize_bilinear: bad source dimensions");
    }
    if (target_h <= 0 || target_w <= 0) {
        throw std::invalid_argument("resize_bilinear: target dimensions must be positive");
    }
    std::vector<double> out(static_cast<std::size_t>(target_h) * target_w);
    const double sr = target_h > 1 ? static_cast<double>(h - 1) / (target_h - 1) : 0.0;
    const double sc = target_w > 1 ? static_cast<double>(w - 1) / (target_w - 1) : 0.0;
    for (int r = 0; r < target_h; ++r) {
        const double fr = r * sr;
        const int r0 = static_cast<int>(fr);
        const int r1 = std::min(r0 + 1, h - 1);
        const double wr = fr - r0;
        for (int c = 0; c < target_w; ++c) {
            const double fc = c * sc;
            const int c0 = static_cast<int>(fc);
            const int c1 = std::min(c0 + 1, w - 1);
            const double wc = fc - c0;
            const double top = pixels[static_cast<std::size_t>(r0) * w + c0] * (1.0 - wc) +
                               pixels[static_cast<std::size_t>(r0) * w + c1] * wc;
            const double bot = pixels[static_cast<std::size_t>(r1) * w + c0] * (1.0 - wc) +
                               pixels[static_cast<std::size_t>(r1) * w + c1] * wc;
            out[static_cast<std::size_t>(r) * target_w + c] = top * (1.0 - wr) + bot * wr;
        }
    }
    return out;
}

Sample resize_sample(const Sample& s, int target_h, int target_w) {
    if (s.height == target_h && s.width == target_w) return s;
    Sample out = s;
    out.pixels = resize_bilinear(s.pixels, s.height, s.width, target_h, target_w);
    out.height = target_h;
    out.width = target_w;
    return out;
}

EncodedLabels encode_labels(const std::vector<std::string>& labels, const LabelCodec& codec,
                            int pad_to) {
    EncodedLabels out;
    out.pad = pad_to;
    out.indices.assign(labels.size() * static_cast<std::size_t>(pad_to), -1);
    out.lengths.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto idx = codec.encode(labels[i]);
        if (static_cast<int>(idx.size()) > pad_to) {
            throw std::invalid_argument("label '" + labels[i] + "' longer than pad length " +
                                        std::to_string(pad_to));
        }
        out.lengths[i] = static_cast<int>(idx.size());
        std::copy(idx.begin(), idx.end(),
                  out.indices.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(pad_to)));
    }
    return out;
}

std::vector<double> affine_resample(const std::vector<double>& pixels, int h, int w,
                                    double rot_rad, double shear, double zoom, double shift_r,
                                    double shift_c) {
    // Forward map: centered coords v' = R(rot)·Shear·zoom·v + shift. Pixels
    // are produced by inverse mapping with bilinear sampling, background 0.
    const double cr = std::cos(rot_rad), sr = std::sin(rot_rad);
    // column-x / row-y composition of [ [cr, -sr], [sr, cr] ] · [ [1, shear], [0, 1] ] · zoom
    const double a00 = cr * zoom, a01 = (cr * shear - sr) * zoom;
    const double a10 = sr * zoom, a11 = (sr * shear + cr) * zoom;
    const double det = a00 * a11 - a01 * a10;
    if (std::abs(det) < 1e-12) throw std::invalid_argument("affine_resample: singular transform");
    const double i00 = a11 / det, i01 = -a01 / det;
    const double i10 = -a10 / det, i11 = a00 / det;

    const double ctr_c = (w - 1) / 2.0, ctr_r = (h - 1) / 2.0;
    std::vector<double> out(pixels.size(), 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double dx = c - ctr_c - shift_c;
            const double dy = r - ctr_r - shift_r;
            const double sx = i00 * dx + i01 * dy + ctr_c;
            const double sy = i10 * dx + i11 * dy + ctr_r;
            if (sx < 0.0 || sy < 0.0 || sx > w - 1 || sy > h - 1) continue;
            const int c0 = static_cast<int>(sx);
            const int r0 = static_cast<int>(sy);
            const int c1 = std::min(c0 + 1, w - 1);
            const int r1 = std::min(r0 + 1, h - 1);
            const double wc = sx - c0, wr = sy - r0;
            const double top = pixels[static_cast<std::size_t>(r0) * w + c0] * (1.0 - wc) +
                               pixels[static_cast<std::size_t>(r0) * w + c1] * wc;
            const double bot = pixels[static_cast<std::size_t>(r1) * w + c0] * (1.0 - wc) +
                               pixels[static_cast<std::size_t>(r1) * w + c1] * wc;
            out[static_cast<std::size_t>(r) * w + c] = top * (1.0 - wr) + bot * wr;
        }
    }
    return out;
}

Sample augment(const Sample& s, const AugmentParams& p, Rng& rng) {
    const double rot = rng.uniform(-p.rotation_deg, p.rotation_deg) * M_PI / 180.0;
    const double shear = rng.uniform(-p.shear, p.shear);
    const double zoom = rng.uniform(p.zoom_lo, p.zoom_hi);
    const double shift_r = rng.uniform(-p.shift_frac, p.shift_frac) * s.height;
    const double shift_c = rng.uniform(-p.shift_frac, p.shift_frac) * s.width;
    Sample out = s;
    out.pixels = affine_resample(s.pixels, s.height, s.width, rot, shear, zoom, shift_r, shift_c);
    return out;
}

Split split_by_writer(const std::vector<Sample>& samples, SplitFractions fractions, Rng& rng) {
    std::vector<std::string> writers;
    std::unordered_map<std::string, std::vector<std::size_t>> by_writer;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto [it, fresh] = by_writer.try_emplace(samples[i].writer_id);
        if (fresh) writers.push_back(samples[i].writer_id);
        it->second.push_back(i);
    }
    if (writers.size() < 3) {
        throw std::invalid_argument("split_by_writer: need at least 3 distinct writers, have " +
                                    std::to_string(writers.size()));
    }
    rng.shuffle(writers);

    const double total = static_cast<double>(samples.size());
    const double targets[3] = {fractions.train * total, fractions.val * total,
                               fractions.test * total};
    double assigned[3] = {0.0, 0.0, 0.0};
    std::unordered_map<std::string, int> writer_split;
    for (const auto& wr : writers) {
        int best = 0;
        double best_deficit = targets[0] - assigned[0];
        for (int k = 1; k < 3; ++k) {
            const double deficit = targets[k] - assigned[k];
            if (deficit > best_deficit) {
                best = k;
                best_deficit = deficit;
            }
        }
        writer_split[wr] = best;
        assigned[best] += static_cast<double>(by_writer[wr].size());
    }

    Split out;
    for (const Sample& s : samples) {
        switch (writer_split[s.writer_id]) {
            case 0: out.train.push_back(s); break;
            case 1: out.val.push_back(s); break;
            default: out.test.push_back(s); break;
        }
    }
    return out;
}

}  // namespace geez::data
