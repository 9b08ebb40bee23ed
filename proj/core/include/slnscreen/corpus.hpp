#pragma once

#include "slnscreen/category.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slns::corpus {

inline constexpr std::size_t kSlidesPerCase = 2;
inline constexpr std::size_t kPatchesPerSlide = 40;
inline constexpr std::size_t kVoteSetSize = 5;

enum class SlideRole { involved, uninvolved };
enum class Split { unassigned, train, val, test };

std::string_view role_name(SlideRole role);
std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct CaseRecord {
    std::string case_id;
    DiagnosticCategory diagnosis = DiagnosticCategory::negative;
    std::vector<std::string> slide_ids;
};

struct SlideRecord {
    std::string slide_id;
    std::string case_id;
    SlideRole role = SlideRole::uninvolved;
    std::vector<std::string> patch_ids;
};

struct PatchRecord {
    std::string patch_id;
    std::string slide_id;
    std::filesystem::path path;  // absolute, or relative to the manifest directory
    DiagnosticCategory observed_dx = DiagnosticCategory::negative;
    Split split = Split::unassigned;
};

// How a patch label is derived. Case labeling gives every patch its case's
// diagnosis, including patches on uninvolved slides. Slide labeling marks
// uninvolved slides negative (ablation only).
enum class LabelMode { case_level, slide_level };

std::string_view label_mode_name(LabelMode mode);
LabelMode parse_label_mode(std::string_view name);

class ManifestError : public ValidationError {
public:
    enum class Kind { parse, unknown_category, missing_reference, wrong_count, duplicate_id, inconsistent };

    ManifestError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Case -> slide -> patch hierarchy. Immutable once built; every constructor
// path validates all record invariants.
class Corpus {
public:
    Corpus(std::vector<CaseRecord> cases, std::vector<SlideRecord> slides, std::vector<PatchRecord> patches,
           LabelMode label_mode = LabelMode::case_level, std::filesystem::path root = {});

    const std::vector<CaseRecord>& cases() const noexcept { return cases_; }
    const std::vector<SlideRecord>& slides() const noexcept { return slides_; }
    const std::vector<PatchRecord>& patches() const noexcept { return patches_; }
    LabelMode label_mode() const noexcept { return label_mode_; }
    const std::filesystem::path& root() const noexcept { return root_; }

    const CaseRecord& case_record(std::string_view case_id) const;
    const SlideRecord& slide(std::string_view slide_id) const;
    const PatchRecord& patch(std::string_view patch_id) const;
    const CaseRecord& case_of_slide(std::string_view slide_id) const;

    std::filesystem::path image_path(const PatchRecord& patch) const;

    // Patches of one split, ordered by patch_id.
    std::vector<const PatchRecord*> patches_in(Split split) const;
    std::size_t count(Split split) const;

    // Label a patch would carry under the given mode.
    DiagnosticCategory expected_label(const PatchRecord& patch, LabelMode mode) const;

    Corpus with_splits(const std::vector<Split>& per_patch) const;
    Corpus relabeled(LabelMode mode) const;

private:
    void index_and_validate();

    std::vector<CaseRecord> cases_;
    std::vector<SlideRecord> slides_;
    std::vector<PatchRecord> patches_;
    LabelMode label_mode_;
    std::filesystem::path root_;
    std::map<std::string, std::size_t, std::less<>> case_index_;
    std::map<std::string, std::size_t, std::less<>> slide_index_;
    std::map<std::string, std::size_t, std::less<>> patch_index_;
};

enum class ImageCheck { none, header };

// JSON Lines manifest, one "case" | "slide" | "patch" record per line. Patch
// paths are resolved against the manifest's directory. With ImageCheck::header
// every patch file must exist and carry a 100x100 P6 header.
Corpus load_manifest(const std::filesystem::path& path, ImageCheck check = ImageCheck::header);
Corpus parse_manifest(std::string_view text, const std::filesystem::path& root = {});
std::string manifest_text(const Corpus& corpus);
void write_manifest(const Corpus& corpus, const std::filesystem::path& path);

// Case counts per diagnostic code (negative, ITC, micro, macro).
struct Layout {
    std::array<std::size_t, kCategoryCount> cases_per_category{10, 6, 8, 10};

    std::size_t case_count() const;
    std::size_t slide_count() const { return case_count() * kSlidesPerCase; }
    std::size_t patch_count() const { return slide_count() * kPatchesPerSlide; }
};

struct SplitFractions {
    // Default: the 2160 / 240 / 320 image split of a 2720-patch corpus.
    double train = 27.0 / 34.0;
    double val = 3.0 / 34.0;
    double test = 4.0 / 34.0;
};

enum class SplitPolicy { slide, image };

std::string_view policy_name(SplitPolicy policy);
SplitPolicy parse_policy(std::string_view name);

struct SplitOptions {
    SplitFractions fractions;
    SplitPolicy policy = SplitPolicy::slide;
    bool case_coherent = false;  // keep both slides of a case in one split
    std::uint64_t seed = 1;
};

// Largest-remainder unit counts for the requested fractions. Rejected when
// any split misses its fraction by more than half a percentage point.
std::array<std::size_t, 3> split_unit_counts(const SplitFractions& fractions, std::size_t units);

// Stratified by case diagnosis: units of each category are shuffled, then
// drawn round-robin across categories; the first draws fill test, then val,
// and the remainder trains.
Corpus assign_splits(const Corpus& corpus, const SplitOptions& options);

struct VoteSet {
    std::string set_id;
    std::string slide_id;
    std::array<std::string, kVoteSetSize> patch_ids;
    DiagnosticCategory observed_dx = DiagnosticCategory::negative;
};

struct VoteCandidate {
    std::string patch_id;
    std::string slide_id;
    DiagnosticCategory observed_dx = DiagnosticCategory::negative;
};

// Groups by slide, orders each slide's patches by patch_id and cuts them into
// consecutive sets of five. A slide whose count is not a multiple of five is
// rejected.
std::vector<VoteSet> chunk_vote_sets(std::vector<VoteCandidate> candidates);
std::vector<VoteSet> build_vote_sets(const Corpus& corpus, Split split = Split::test);

// Shuffles case diagnoses across cases (slide roles and patch labels follow).
// Used for the label-permutation null experiment.
Corpus permute_case_labels(const Corpus& corpus, std::uint64_t seed);

} // namespace slns::corpus
