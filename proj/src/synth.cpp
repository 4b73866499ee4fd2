#include <algorithm>
#include <cstdio>
#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "geez/data.hpp"
#include "geez/utf8.hpp"

namespace geez::data {

namespace {

// Synthetic classes are labeled with Ethiopic code points so the whole
// pipeline exercises multi-byte UTF-8.
constexpr std::uint32_t kGlyphBase = 0x1200;

struct StyleParams {
    double rot = 0.0, shear = 0.0, zoom = 1.0, shift_r = 0.0, shift_c = 0.0, stroke = 1.0;
    double deform = 0.0;  // per-point skeleton displacement scale
};

StyleParams style_params(std::uint64_t master, int style) {
    Rng rng = Rng::derive(master, 0x5354594cULL + static_cast<std::uint64_t>(style) * 2654435761ULL);
    StyleParams p;
    p.rot = rng.uniform(-0.16, 0.16);
    p.shear = rng.uniform(-0.14, 0.14);
    p.zoom = rng.uniform(0.84, 1.16);
    p.shift_r = rng.uniform(-0.05, 0.05);
    p.shift_c = rng.uniform(-0.05, 0.05);
    p.stroke = rng.uniform(0.8, 1.35);
    p.deform = rng.uniform(0.05, 0.13);
    return p;
}

using Point = std::pair<double, double>;  // (row, col) in the unit square

std::vector<Point> glyph_skeleton(std::uint64_t master, int cls) {
    Rng rng = Rng::derive(master, 0x474c595048ULL + static_cast<std::uint64_t>(cls) * 7919ULL);
    const int k = 4 + rng.uniform_int(4);
    std::vector<Point> pts(static_cast<std::size_t>(k));
    for (auto& [r, c] : pts) {
        r = rng.uniform(0.12, 0.88);
        c = rng.uniform(0.12, 0.88);
    }
    return pts;
}

// How one style writes one glyph: the shared skeleton with a style-specific
// displacement of every point. This is what makes styles more than affine
// warps, so unseen styles keep a residual recognition gap.
std::vector<Point> styled_skeleton(std::uint64_t master, int cls, int style, double deform,
                                   const std::vector<Point>& skeleton) {
    Rng rng = Rng::derive(master, 0xdef0ULL + (static_cast<std::uint64_t>(style) << 20) +
                                      static_cast<std::uint64_t>(cls) * 131ULL);
    std::vector<Point> out = skeleton;
    for (auto& [r, c] : out) {
        r = std::clamp(r + rng.uniform(-deform, deform), 0.05, 0.95);
        c = std::clamp(c + rng.uniform(-deform, deform), 0.05, 0.95);
    }
    return out;
}

double dist_to_segment(double pr, double pc, const Point& a, const Point& b) {
    const double vr = b.first - a.first, vc = b.second - a.second;
    const double wr = pr - a.first, wc = pc - a.second;
    const double vv = vr * vr + vc * vc;
    double t = vv > 0.0 ? (wr * vr + wc * vc) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dr = wr - t * vr, dc = wc - t * vc;
    return std::sqrt(dr * dr + dc * dc);
}

// Renders one styled glyph into a box of the canvas, max-blending
// anti-aliased strokes.
void render_glyph(std::vector<double>& canvas, int H, int W, double box_r, double box_c,
                  double box_h, double box_w, const std::vector<Point>& skeleton,
                  const StyleParams& st) {
    std::vector<Point> q(skeleton.size());
    const double cr = std::cos(st.rot), sr = std::sin(st.rot);
    for (std::size_t i = 0; i < skeleton.size(); ++i) {
        const double r = skeleton[i].first - 0.5;
        const double c = skeleton[i].second - 0.5 + st.shear * r;
        const double rc = (sr * c + cr * r) * st.zoom;
        const double cc = (cr * c - sr * r) * st.zoom;
        q[i] = {(rc + 0.5 + st.shift_r) * box_h + box_r, (cc + 0.5 + st.shift_c) * box_w + box_c};
    }
    const double half_width = 0.05 * std::min(box_h, box_w) * st.stroke + 0.45;
    for (std::size_t s = 0; s + 1 < q.size(); ++s) {
        const double r0 = std::min(q[s].first, q[s + 1].first) - half_width - 1.0;
        const double r1 = std::max(q[s].first, q[s + 1].first) + half_width + 1.0;
        const double c0 = std::min(q[s].second, q[s + 1].second) - half_width - 1.0;
        const double c1 = std::max(q[s].second, q[s + 1].second) + half_width + 1.0;
        const int rlo = std::max(0, static_cast<int>(std::floor(r0)));
        const int rhi = std::min(H - 1, static_cast<int>(std::ceil(r1)));
        const int clo = std::max(0, static_cast<int>(std::floor(c0)));
        const int chi = std::min(W - 1, static_cast<int>(std::ceil(c1)));
        for (int r = rlo; r <= rhi; ++r) {
            for (int c = clo; c <= chi; ++c) {
                const double d = dist_to_segment(r, c, q[s], q[s + 1]);
                const double v = std::clamp(half_width - d + 0.5, 0.0, 1.0);
                double& px = canvas[static_cast<std::size_t>(r) * W + c];
                px = std::max(px, v);
            }
        }
    }
}

void quantize(std::vector<double>& pixels) {
    for (double& v : pixels) {
        v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
    }
}

std::string style_name(int s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%03d", s);
    return buf;
}

}  // namespace

SynthResult synth_generate(int num_classes, int samples_per_class, int num_styles, SynthKind kind,
                           Rng& rng, int glyph_charset) {
    if (num_classes < 1 || samples_per_class < 1 || num_styles < 1) {
        throw std::invalid_argument("synth_generate: counts must be positive");
    }
    const std::uint64_t master = rng.next_u64();

    const int inventory = kind == SynthKind::character ? num_classes : glyph_charset;
    std::vector<std::uint32_t> chars(static_cast<std::size_t>(inventory));
    for (int i = 0; i < inventory; ++i) chars[static_cast<std::size_t>(i)] = kGlyphBase + i;

    std::vector<std::vector<Point>> skeletons(static_cast<std::size_t>(inventory));
    for (int i = 0; i < inventory; ++i) skeletons[static_cast<std::size_t>(i)] = glyph_skeleton(master, i);
    std::vector<StyleParams> styles(static_cast<std::size_t>(num_styles));
    for (int s = 0; s < num_styles; ++s) styles[static_cast<std::size_t>(s)] = style_params(master, s);

    // one rendering skeleton per (glyph, style)
    std::vector<std::vector<Point>> styled(static_cast<std::size_t>(inventory) * num_styles);
    for (int i = 0; i < inventory; ++i) {
        for (int s = 0; s < num_styles; ++s) {
            styled[static_cast<std::size_t>(i) * num_styles + s] = styled_skeleton(
                master, i, s, styles[static_cast<std::size_t>(s)].deform,
                skeletons[static_cast<std::size_t>(i)]);
        }
    }

    SynthResult out;
    out.codec = LabelCodec::from_chars(chars);

    if (kind == SynthKind::character) {
        const int H = 28, W = 28;
        for (int cls = 0; cls < num_classes; ++cls) {
            std::string label;
            utf8_append(label, chars[static_cast<std::size_t>(cls)]);
            for (int i = 0; i < samples_per_class; ++i) {
                const int st = i % num_styles;
                Sample s;
                s.height = H;
                s.width = W;
                s.pixels.assign(static_cast<std::size_t>(H) * W, 0.0);
                render_glyph(s.pixels, H, W, 3.0, 3.0, 22.0, 22.0,
                             styled[static_cast<std::size_t>(cls) * num_styles + st],
                             styles[static_cast<std::size_t>(st)]);
                quantize(s.pixels);
                s.label = label;
                s.writer_id = s.style_id = style_name(st);
                out.samples.push_back(std::move(s));
            }
        }
        return out;
    }

    // Word mode: a fixed vocabulary of distinct glyph sequences, length 2-6.
    std::vector<std::vector<int>> vocab;
    std::set<std::vector<int>> seen;
    Rng word_rng = Rng::derive(master, 0x574f5244ULL);
    while (static_cast<int>(vocab.size()) < num_classes) {
        const int len = 2 + word_rng.uniform_int(5);
        std::vector<int> word(static_cast<std::size_t>(len));
        for (auto& g : word) g = word_rng.uniform_int(inventory);
        if (seen.insert(word).second) vocab.push_back(std::move(word));
    }

    const int H = 32, W = 128;
    for (int wi = 0; wi < num_classes; ++wi) {
        const auto& word = vocab[static_cast<std::size_t>(wi)];
        if (word.size() > 6) throw std::invalid_argument("synth word overflows the 32×128 canvas");
        std::string label;
        for (int g : word) utf8_append(label, chars[static_cast<std::size_t>(g)]);
        for (int i = 0; i < samples_per_class; ++i) {
            const int st = i % num_styles;
            Sample s;
            s.height = H;
            s.width = W;
            s.pixels.assign(static_cast<std::size_t>(H) * W, 0.0);
            for (std::size_t j = 0; j < word.size(); ++j) {
                render_glyph(s.pixels, H, W, 5.0, 6.0 + 19.0 * static_cast<double>(j), 22.0,
                             16.0, styled[static_cast<std::size_t>(word[j]) * num_styles + st],
                             styles[static_cast<std::size_t>(st)]);
            }
            quantize(s.pixels);
            s.label = label;
            s.writer_id = s.style_id = style_name(st);
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace geez::data
