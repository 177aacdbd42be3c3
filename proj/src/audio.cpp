#include "sscl/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sscl/errors.hpp"

namespace fs = std::filesystem;

namespace sscl {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

double decode_sample(const unsigned char* p, std::uint16_t bits, std::uint16_t format_tag) {
    if (format_tag == 3) {  // IEEE float
        float v;
        std::memcpy(&v, p, 4);
        return static_cast<double>(v);
    }
    switch (bits) {
        case 8:
            // 8-bit WAV is unsigned.
            return (static_cast<int>(p[0]) - 128) / 128.0;
        case 16: {
            const std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
            return v / 32768.0;
        }
        case 24: {
            std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
            if (v & 0x800000) v |= ~0xFFFFFF;
            return v / 8388608.0;
        }
        case 32: {
            std::int32_t v;
            std::memcpy(&v, p, 4);
            return v / 2147483648.0;
        }
        default:
            throw FormatError("unsupported PCM bit depth " + std::to_string(bits));
    }
}

} // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("not a RIFF/WAVE file: " + path);
    }

    std::uint16_t format_tag = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const char* id = reinterpret_cast<const char*>(buf.data() + pos);
        const std::uint32_t len = read_u32(buf.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + len > buf.size()) break;
        if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
            format_tag = read_u16(buf.data() + body);
            channels = read_u16(buf.data() + body + 2);
            sample_rate = read_u32(buf.data() + body + 4);
            bits = read_u16(buf.data() + body + 14);
            if (format_tag == 0xFFFE && len >= 40) {
                // WAVE_FORMAT_EXTENSIBLE: actual tag is the first two bytes
                // of the SubFormat GUID.
                format_tag = read_u16(buf.data() + body + 24);
            }
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = buf.data() + body;
            data_len = len;
        }
        pos = body + len + (len & 1);  // chunks are word-aligned
    }

    if (sample_rate == 0 || channels == 0) throw FormatError("missing fmt chunk: " + path);
    if (!data) throw FormatError("missing data chunk: " + path);
    if (format_tag != 1 && format_tag != 3) {
        throw FormatError("unsupported WAV encoding tag " + std::to_string(format_tag) + " in " + path);
    }
    if (format_tag == 3 && bits != 32) {
        throw FormatError("float WAV must be 32-bit, got " + std::to_string(bits));
    }
    if (format_tag == 1 && bits != 8 && bits != 16 && bits != 24 && bits != 32) {
        throw FormatError("unsupported PCM bit depth " + std::to_string(bits) + " in " + path);
    }

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_size = bytes_per_sample * channels;
    const std::size_t frames = data_len / frame_size;
    if (frames == 0) throw FormatError("empty data chunk: " + path);

    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.source_id = fs::path(path).stem().string();
    clip.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            acc += decode_sample(data + f * frame_size + c * bytes_per_sample, bits, format_tag);
        }
        clip.samples[f] = acc / channels;
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_len = n * 2;
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    out.write("RIFF", 4);
    put_u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(clip.sample_rate);
    put_u32(clip.sample_rate * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_len);
    for (const double s : clip.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        put_u16(static_cast<std::uint16_t>(v));
    }
}

AudioClip resample(const AudioClip& clip, std::uint32_t target_rate) {
    if (target_rate == 0) throw ParameterError("target_rate must be positive");
    if (clip.sample_rate == target_rate) return clip;

    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    const std::size_t n = clip.samples.size();
    const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));

    // Windowed-sinc interpolation; the kernel widens by 1/ratio when
    // downsampling so the cutoff tracks the output Nyquist.
    const double scale = std::min(1.0, ratio);
    const double cutoff = 0.5 * scale * 0.95;
    const int half_width = static_cast<int>(std::ceil(32.0 / scale));

    AudioClip out;
    out.sample_rate = target_rate;
    out.label = clip.label;
    out.source_id = clip.source_id;
    out.samples.resize(out_len);

    for (std::size_t j = 0; j < out_len; ++j) {
        const double center = static_cast<double>(j) / ratio;
        const auto lo = static_cast<long long>(std::ceil(center)) - half_width;
        const auto hi = static_cast<long long>(std::floor(center)) + half_width;
        double acc = 0.0;
        for (long long i = std::max<long long>(lo, 0); i <= std::min<long long>(hi, static_cast<long long>(n) - 1); ++i) {
            const double x = static_cast<double>(i) - center;
            double h;
            if (std::abs(x) < 1e-12) {
                h = 2.0 * cutoff;
            } else {
                h = std::sin(2.0 * 3.14159265358979323846 * cutoff * x) / (3.14159265358979323846 * x);
            }
            const double d = x / half_width;  // in (-1, 1)
            const double w = 0.42 + 0.5 * std::cos(3.14159265358979323846 * d) +
                             0.08 * std::cos(2.0 * 3.14159265358979323846 * d);
            acc += clip.samples[static_cast<std::size_t>(i)] * h * w;
        }
        out.samples[j] = acc / scale;  // unity passband gain for downsampling
    }
    return out;
}

SegmentPair split_pair(const AudioClip& clip) {
    if (clip.samples.size() < 2) {
        throw DegenerateInputError("cannot split clip '" + clip.source_id + "' with fewer than 2 samples");
    }
    const std::size_t half = clip.samples.size() / 2;
    SegmentPair pair;
    pair.parent_id = clip.source_id;
    pair.first.sample_rate = pair.second.sample_rate = clip.sample_rate;
    pair.first.label = pair.second.label = clip.label;
    pair.first.source_id = clip.source_id + "#0";
    pair.second.source_id = clip.source_id + "#1";
    pair.first.samples.assign(clip.samples.begin(), clip.samples.begin() + half);
    pair.second.samples.assign(clip.samples.begin() + half, clip.samples.begin() + 2 * half);
    return pair;
}

NormalizedSegment normalize(const AudioClip& clip) {
    if (clip.samples.empty()) throw DegenerateInputError("cannot normalize empty clip");
    const std::size_t n = clip.samples.size();
    double mean = 0.0;
    for (const double s : clip.samples) mean += s;
    mean /= n;
    double var = 0.0;
    for (const double s : clip.samples) var += (s - mean) * (s - mean);
    var /= n;

    NormalizedSegment out;
    out.clip = clip;
    if (var < 1e-12) {
        std::fill(out.clip.samples.begin(), out.clip.samples.end(), 0.0);
        out.constant = true;
        return out;
    }
    const double inv_std = 1.0 / std::sqrt(var);
    for (double& s : out.clip.samples) s = (s - mean) * inv_std;
    return out;
}

int DatasetManifest::class_index(const std::string& label) const {
    const auto it = std::find(class_names.begin(), class_names.end(), label);
    if (it == class_names.end()) throw ConfigError("unknown class label '" + label + "'");
    return static_cast<int>(it - class_names.begin());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (const char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

fs::path find_metadata_csv(const fs::path& root, ManifestFormat format) {
    std::vector<fs::path> candidates;
    if (format == ManifestFormat::urbansound8k_csv) {
        candidates = {root / "metadata" / "UrbanSound8K.csv"};
    } else {
        candidates = {root / "meta" / "esc50.csv"};
    }
    for (const auto& c : candidates) {
        if (fs::exists(c)) return c;
    }
    // Fall back to the lexicographically first CSV in root or its metadata
    // directories.
    std::vector<fs::path> found;
    for (const auto& dir : {root, root / "metadata", root / "meta"}) {
        if (!fs::is_directory(dir)) continue;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".csv") found.push_back(e.path());
        }
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) {
        throw FormatError("no metadata CSV found under " + root.string());
    }
    return found.front();
}

fs::path resolve_audio_path(const fs::path& root, const std::string& file, int fold) {
    const std::string fold_dir = "fold" + std::to_string(fold);
    const fs::path candidates[] = {
        root / "audio" / fold_dir / file,
        root / fold_dir / file,
        root / "audio" / file,
        root / file,
    };
    for (const auto& c : candidates) {
        if (fs::exists(c)) return c;
    }
    return candidates[0];
}

DatasetManifest load_csv_manifest(const fs::path& root, ManifestFormat format, const ManifestOptions& options) {
    const fs::path csv = find_metadata_csv(root, format);
    std::ifstream in(csv);
    if (!in) throw IoError("cannot open " + csv.string());

    const bool esc = format == ManifestFormat::esc50_csv;
    const std::string file_col = options.file_column.empty() ? (esc ? "filename" : "slice_file_name") : options.file_column;
    const std::string fold_col = options.fold_column.empty() ? "fold" : options.fold_column;
    const std::string label_col = options.label_column.empty() ? (esc ? "category" : "class") : options.label_column;

    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty metadata CSV " + csv.string());
    const auto header = split_csv_line(line);
    auto col_index = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw FormatError("metadata CSV missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t fi = col_index(file_col);
    const std::size_t li = col_index(label_col);
    const std::size_t di = col_index(fold_col);

    DatasetManifest manifest;
    std::set<std::string> labels;
    std::set<std::string> paths;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() <= std::max({fi, li, di})) {
            throw FormatError("short row in " + csv.string() + ": " + line);
        }
        ManifestEntry entry;
        entry.fold = std::stoi(fields[di]);
        entry.path = resolve_audio_path(root, fields[fi], entry.fold).string();
        entry.label = fields[li];
        if (!paths.insert(entry.path).second) {
            throw FormatError("duplicate file path in manifest: " + entry.path);
        }
        labels.insert(entry.label);
        manifest.entries.push_back(std::move(entry));
    }
    manifest.class_names.assign(labels.begin(), labels.end());
    if (manifest.entries.empty()) throw EmptyDatasetError("no entries in " + csv.string());
    return manifest;
}

DatasetManifest load_flat_dirs_manifest(const fs::path& root) {
    DatasetManifest manifest;
    std::set<std::string> labels;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        std::vector<fs::path> files;
        for (const auto& f : fs::directory_iterator(dir)) {
            if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(f.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            manifest.entries.push_back({f.string(), dir.filename().string(), 0});
        }
        if (!files.empty()) labels.insert(dir.filename().string());
    }
    manifest.class_names.assign(labels.begin(), labels.end());
    if (manifest.entries.empty()) throw EmptyDatasetError("no .wav files under " + root.string());
    return manifest;
}

} // namespace

DatasetManifest load_manifest(const std::string& root, ManifestFormat format, const ManifestOptions& options) {
    if (!fs::exists(root)) throw IoError("dataset root does not exist: " + root);
    if (format == ManifestFormat::flat_dirs) return load_flat_dirs_manifest(root);
    return load_csv_manifest(root, format, options);
}

ManifestFormat manifest_format_from_string(const std::string& name) {
    // Accept either hyphenated or underscored spellings.
    std::string n = name;
    std::replace(n.begin(), n.end(), '_', '-');
    if (n == "urbansound8k-csv") return ManifestFormat::urbansound8k_csv;
    if (n == "esc50-csv") return ManifestFormat::esc50_csv;
    if (n == "flat-dirs") return ManifestFormat::flat_dirs;
    throw ConfigError("unknown manifest format '" + name + "'");
}

std::string to_string(ManifestFormat format) {
    switch (format) {
        case ManifestFormat::urbansound8k_csv: return "urbansound8k-csv";
        case ManifestFormat::esc50_csv: return "esc50-csv";
        case ManifestFormat::flat_dirs: return "flat-dirs";
    }
    return "?";
}

} // namespace sscl
