#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sscl {

// Decoded mono clip.  Amplitudes are dimensionless in [-1, 1] after decode.
struct AudioClip {
    std::vector<double> samples;
    std::uint32_t sample_rate = 0;
    std::optional<std::string> label;
    std::string source_id;

    double duration() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

// The two equal halves of a clip; `first`/`second` are the sibling views the
// contrastive task pulls together.
struct SegmentPair {
    AudioClip first;
    AudioClip second;
    std::string parent_id;
};

struct ManifestEntry {
    std::string path;
    std::string label;
    int fold = 0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;

    int class_index(const std::string& label) const;
};

enum class ManifestFormat { urbansound8k_csv, esc50_csv, flat_dirs };

// Canonical internal sample rate applied on ingest.
inline constexpr std::uint32_t kDefaultSampleRate = 22050;

AudioClip load_wav(const std::string& path);

// 16-bit PCM writer, used by the CLI-facing tooling and tests to materialize
// synthetic datasets.
void write_wav(const std::string& path, const AudioClip& clip);

// Windowed-sinc polyphase resampler.  Identity (bit-exact) when the clip is
// already at target_rate.
AudioClip resample(const AudioClip& clip, std::uint32_t target_rate);

// Split into two halves of floor(n/2) samples each; an odd final sample is
// dropped.
SegmentPair split_pair(const AudioClip& clip);

struct NormalizedSegment {
    AudioClip clip;
    bool constant = false;  // all-zero output, excluded from training batches
};

// Zero mean, unit (population) variance.  Constant input is zeroed and
// flagged instead of dividing by zero.
NormalizedSegment normalize(const AudioClip& clip);

struct ManifestOptions {
    // Column names for the CSV formats; empty = the format's conventional
    // default (slice_file_name/fold/class for UrbanSound8K,
    // filename/fold/category for ESC-50).
    std::string file_column;
    std::string fold_column;
    std::string label_column;
};

DatasetManifest load_manifest(const std::string& root, ManifestFormat format,
                              const ManifestOptions& options = {});

ManifestFormat manifest_format_from_string(const std::string& name);
std::string to_string(ManifestFormat format);

} // namespace sscl
