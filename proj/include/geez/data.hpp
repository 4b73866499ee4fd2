#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "geez/rng.hpp"

namespace geez::data {

// One grayscale image with its transcription. Pixels are row-major H×W reals
// in [0,1], ink bright on dark background.
struct Sample {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;
    std::string label;
    std::string writer_id;
    std::string style_id;

    double pixel(int r, int c) const {
        return pixels[static_cast<std::size_t>(r) * width + c];
    }
};

// Bijection between script characters (Unicode scalar values) and class
// indices 0..C-1; index C is reserved for the CTC blank.
class LabelCodec {
public:
    static LabelCodec from_chars(const std::vector<std::uint32_t>& chars);
    // Charset file: one character per line, line number = class index.
    static LabelCodec load(const std::filesystem::path& charset_file);
    void save(const std::filesystem::path& charset_file) const;

    int size() const { return static_cast<int>(chars_.size()); }
    int blank_index() const { return size(); }
    bool contains(std::uint32_t cp) const { return index_.count(cp) != 0; }

    std::vector<int> encode(const std::string& label) const;  // throws on unknown character
    std::string decode(const std::vector<int>& indices) const;
    std::uint32_t char_at(int cls) const { return chars_[static_cast<std::size_t>(cls)]; }

private:
    std::vector<std::uint32_t> chars_;
    std::unordered_map<std::uint32_t, int> index_;
};

struct AugmentParams {
    double rotation_deg = 10.0;  // sampled in ±rotation_deg
    double shift_frac = 0.1;     // ±fraction of each dimension
    double shear = 0.1;          // ±
    double zoom_lo = 0.9;
    double zoom_hi = 1.1;
};

// NetPBM grayscale: P5 (binary) written, P5 and P2 (ASCII) read; maxval must
// be 255 so loaded values are exactly byte/255.
struct PgmImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bytes;
};
void write_pgm(const std::filesystem::path& path, const PgmImage& img);
PgmImage read_pgm(const std::filesystem::path& path);

// Dataset directory: images/*.pgm plus labels.tsv with tab-separated columns
// relative_path, label, writer_id, style_id. Images brighter than 0.5 mean
// are inverted so ink is always the high value.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, const LabelCodec& codec);
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);

// Corner-aligned bilinear interpolation.
std::vector<double> resize_bilinear(const std::vector<double>& pixels, int h, int w,
                                    int target_h, int target_w);
Sample resize_sample(const Sample& s, int target_h, int target_w);

// Right-padded label index matrix with sentinel -1 plus true lengths.
struct EncodedLabels {
    std::vector<int> indices;  // row-major, num_labels × pad
    int pad = 0;
    std::vector<int> lengths;
};
EncodedLabels encode_labels(const std::vector<std::string>& labels, const LabelCodec& codec,
                            int pad_to);

// Inverse-mapped affine resample (rotation about center, shear, zoom,
// translation), bilinear sampling, background 0 outside.
std::vector<double> affine_resample(const std::vector<double>& pixels, int h, int w,
                                    double rot_rad, double shear, double zoom, double shift_r,
                                    double shift_c);

// Random affine jitter within the parameter ranges; label and ids unchanged.
Sample augment(const Sample& s, const AugmentParams& p, Rng& rng);

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};
struct Split {
    std::vector<Sample> train, val, test;
};

// Partitions writers (never samples) greedily toward the target sample
// fractions; no writer appears in two splits.
Split split_by_writer(const std::vector<Sample>& samples, SplitFractions fractions, Rng& rng);

enum class SynthKind { character, word };

struct SynthResult {
    std::vector<Sample> samples;
    LabelCodec codec;
};

// Procedural glyph corpus standing in for scanned handwriting: each class is
// a fixed random polyline skeleton rendered with anti-aliased strokes, each
// style a fixed affine plus stroke-width perturbation shared by all glyphs of
// that style. Word mode concatenates 2-6 glyphs onto a 32×128 canvas;
// num_classes then counts vocabulary words drawn over a glyph_charset-sized
// inventory. writer_id == style_id for synthetic samples. Pixels are
// quantized to byte/255 so saving and reloading is exact.
SynthResult synth_generate(int num_classes, int samples_per_class, int num_styles, SynthKind kind,
                           Rng& rng, int glyph_charset = 10);

}  // namespace geez::data
