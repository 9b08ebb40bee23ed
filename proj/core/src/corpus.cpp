#include "slnscreen/corpus.hpp"

#include "slnscreen/ppm.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace slns::corpus {

using json = nlohmann::json;

std::string_view role_name(SlideRole role) {
    return role == SlideRole::involved ? "involved" : "uninvolved";
}

std::string_view split_name(Split split) {
    switch (split) {
    case Split::unassigned: return "none";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    if (name == "none") return Split::unassigned;
    throw ValidationError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

std::string_view label_mode_name(LabelMode mode) {
    return mode == LabelMode::case_level ? "case" : "slide";
}

LabelMode parse_label_mode(std::string_view name) {
    if (name == "case") return LabelMode::case_level;
    if (name == "slide") return LabelMode::slide_level;
    throw ValidationError("unknown label mode '" + std::string(name) + "' (expected case or slide)");
}

std::string_view policy_name(SplitPolicy policy) {
    return policy == SplitPolicy::slide ? "slide" : "image";
}

SplitPolicy parse_policy(std::string_view name) {
    if (name == "slide") return SplitPolicy::slide;
    if (name == "image") return SplitPolicy::image;
    throw ValidationError("unknown split policy '" + std::string(name) + "' (expected slide or image)");
}

std::size_t Layout::case_count() const {
    return std::accumulate(cases_per_category.begin(), cases_per_category.end(), std::size_t{0});
}

Corpus::Corpus(std::vector<CaseRecord> cases, std::vector<SlideRecord> slides, std::vector<PatchRecord> patches,
               LabelMode label_mode, std::filesystem::path root)
    : cases_(std::move(cases)),
      slides_(std::move(slides)),
      patches_(std::move(patches)),
      label_mode_(label_mode),
      root_(std::move(root)) {
    index_and_validate();
}

void Corpus::index_and_validate() {
    using K = ManifestError::Kind;
    const auto build = [](auto& index, const auto& records, auto id_of, const char* what) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            const std::string& id = id_of(records[i]);
            if (id.empty()) throw ManifestError(K::parse, std::string(what) + " record " + std::to_string(i + 1) + " has an empty id");
            if (!index.emplace(id, i).second) {
                throw ManifestError(K::duplicate_id, std::string("duplicate ") + what + " id '" + id + "'");
            }
        }
    };
    build(case_index_, cases_, [](const CaseRecord& r) -> const std::string& { return r.case_id; }, "case");
    build(slide_index_, slides_, [](const SlideRecord& r) -> const std::string& { return r.slide_id; }, "slide");
    build(patch_index_, patches_, [](const PatchRecord& r) -> const std::string& { return r.patch_id; }, "patch");

    for (const CaseRecord& c : cases_) {
        if (c.slide_ids.size() != kSlidesPerCase) {
            throw ManifestError(K::wrong_count, "case '" + c.case_id + "' lists " + std::to_string(c.slide_ids.size()) +
                                                    " slides, expected " + std::to_string(kSlidesPerCase));
        }
        std::size_t involved = 0;
        for (const std::string& sid : c.slide_ids) {
            const auto it = slide_index_.find(sid);
            if (it == slide_index_.end()) {
                throw ManifestError(K::missing_reference, "case '" + c.case_id + "' references missing slide '" + sid + "'");
            }
            const SlideRecord& s = slides_[it->second];
            if (s.case_id != c.case_id) {
                throw ManifestError(K::inconsistent, "slide '" + sid + "' is listed by case '" + c.case_id +
                                                         "' but names case '" + s.case_id + "'");
            }
            if (s.role == SlideRole::involved) ++involved;
        }
        if (c.slide_ids[0] == c.slide_ids[1]) {
            throw ManifestError(K::duplicate_id, "case '" + c.case_id + "' lists slide '" + c.slide_ids[0] + "' twice");
        }
        const std::size_t want = is_positive(c.diagnosis) ? 1 : 0;
        if (involved != want) {
            throw ManifestError(K::inconsistent,
                                "case '" + c.case_id + "' (diagnosis " + std::to_string(code(c.diagnosis)) + ") has " +
                                    std::to_string(involved) + " involved slides, expected " + std::to_string(want));
        }
    }
    for (const SlideRecord& s : slides_) {
        const auto it = case_index_.find(s.case_id);
        if (it == case_index_.end()) {
            throw ManifestError(K::missing_reference, "slide '" + s.slide_id + "' references missing case '" + s.case_id + "'");
        }
        const CaseRecord& c = cases_[it->second];
        if (std::find(c.slide_ids.begin(), c.slide_ids.end(), s.slide_id) == c.slide_ids.end()) {
            throw ManifestError(K::inconsistent, "slide '" + s.slide_id + "' is not listed by its case '" + s.case_id + "'");
        }
        if (s.patch_ids.size() != kPatchesPerSlide) {
            throw ManifestError(K::wrong_count, "slide '" + s.slide_id + "' lists " + std::to_string(s.patch_ids.size()) +
                                                    " patches, expected " + std::to_string(kPatchesPerSlide));
        }
        std::set<std::string_view> seen;
        for (const std::string& pid : s.patch_ids) {
            if (!seen.insert(pid).second) {
                throw ManifestError(K::duplicate_id, "slide '" + s.slide_id + "' lists patch '" + pid + "' twice");
            }
            const auto pit = patch_index_.find(pid);
            if (pit == patch_index_.end()) {
                throw ManifestError(K::missing_reference, "slide '" + s.slide_id + "' references missing patch '" + pid + "'");
            }
            if (patches_[pit->second].slide_id != s.slide_id) {
                throw ManifestError(K::inconsistent, "patch '" + pid + "' is listed by slide '" + s.slide_id +
                                                         "' but names slide '" + patches_[pit->second].slide_id + "'");
            }
        }
    }
    for (const PatchRecord& p : patches_) {
        const auto it = slide_index_.find(p.slide_id);
        if (it == slide_index_.end()) {
            throw ManifestError(K::missing_reference, "patch '" + p.patch_id + "' references missing slide '" + p.slide_id + "'");
        }
        const auto& listed = slides_[it->second].patch_ids;
        if (std::find(listed.begin(), listed.end(), p.patch_id) == listed.end()) {
            throw ManifestError(K::inconsistent, "patch '" + p.patch_id + "' is not listed by its slide '" + p.slide_id + "'");
        }
        const DiagnosticCategory want = expected_label(p, label_mode_);
        if (p.observed_dx != want) {
            throw ManifestError(K::inconsistent, "patch '" + p.patch_id + "' has observed_dx " + std::to_string(code(p.observed_dx)) +
                                                     " but its " + std::string(label_mode_name(label_mode_)) +
                                                     " label is " + std::to_string(code(want)));
        }
    }
}

const CaseRecord& Corpus::case_record(std::string_view case_id) const {
    const auto it = case_index_.find(case_id);
    if (it == case_index_.end()) throw ValidationError("unknown case '" + std::string(case_id) + "'");
    return cases_[it->second];
}

const SlideRecord& Corpus::slide(std::string_view slide_id) const {
    const auto it = slide_index_.find(slide_id);
    if (it == slide_index_.end()) throw ValidationError("unknown slide '" + std::string(slide_id) + "'");
    return slides_[it->second];
}

const PatchRecord& Corpus::patch(std::string_view patch_id) const {
    const auto it = patch_index_.find(patch_id);
    if (it == patch_index_.end()) throw ValidationError("unknown patch '" + std::string(patch_id) + "'");
    return patches_[it->second];
}

const CaseRecord& Corpus::case_of_slide(std::string_view slide_id) const {
    return case_record(slide(slide_id).case_id);
}

std::filesystem::path Corpus::image_path(const PatchRecord& patch) const {
    return patch.path.is_absolute() || root_.empty() ? patch.path : root_ / patch.path;
}

std::vector<const PatchRecord*> Corpus::patches_in(Split split) const {
    std::vector<const PatchRecord*> out;
    for (const auto& [id, index] : patch_index_) {
        if (patches_[index].split == split) out.push_back(&patches_[index]);
    }
    return out;
}

std::size_t Corpus::count(Split split) const {
    return static_cast<std::size_t>(
        std::count_if(patches_.begin(), patches_.end(), [&](const PatchRecord& p) { return p.split == split; }));
}

DiagnosticCategory Corpus::expected_label(const PatchRecord& patch, LabelMode mode) const {
    const SlideRecord& s = slide(patch.slide_id);
    const CaseRecord& c = case_record(s.case_id);
    if (mode == LabelMode::slide_level && s.role == SlideRole::uninvolved) return DiagnosticCategory::negative;
    return c.diagnosis;
}

Corpus Corpus::with_splits(const std::vector<Split>& per_patch) const {
    if (per_patch.size() != patches_.size()) {
        throw ValidationError("split assignment covers " + std::to_string(per_patch.size()) + " of " +
                              std::to_string(patches_.size()) + " patches");
    }
    std::vector<PatchRecord> patches = patches_;
    for (std::size_t i = 0; i < patches.size(); ++i) patches[i].split = per_patch[i];
    return Corpus(cases_, slides_, std::move(patches), label_mode_, root_);
}

Corpus Corpus::relabeled(LabelMode mode) const {
    std::vector<PatchRecord> patches = patches_;
    for (PatchRecord& p : patches) p.observed_dx = expected_label(p, mode);
    return Corpus(cases_, slides_, std::move(patches), mode, root_);
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
    throw ManifestError(ManifestError::Kind::parse, "manifest line " + std::to_string(line) + ": " + what);
}

std::string get_string(const json& j, const char* key, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string()) parse_fail(line, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

std::vector<std::string> get_string_list(const json& j, const char* key, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_array()) parse_fail(line, std::string("missing array field '") + key + "'");
    std::vector<std::string> out;
    for (const json& v : *it) {
        if (!v.is_string()) parse_fail(line, std::string("field '") + key + "' must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

DiagnosticCategory get_category(const json& j, const char* key, const std::string& record, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) parse_fail(line, std::string("missing integer field '") + key + "'");
    const long long v = it->get<long long>();
    if (v < 0 || v > 3) {
        throw ManifestError(ManifestError::Kind::unknown_category,
                            "manifest line " + std::to_string(line) + ": " + record + " has " + key + " = " +
                                std::to_string(v) + ", outside 0..3");
    }
    return static_cast<DiagnosticCategory>(v);
}

} // namespace

Corpus parse_manifest(std::string_view text, const std::filesystem::path& root) {
    std::vector<CaseRecord> cases;
    std::vector<SlideRecord> slides;
    std::vector<PatchRecord> patches;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            parse_fail(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) parse_fail(line_no, "record must be a JSON object");
        const std::string kind = get_string(j, "kind", line_no);
        if (kind == "case") {
            CaseRecord c;
            c.case_id = get_string(j, "case_id", line_no);
            c.diagnosis = get_category(j, "diagnosis", "case '" + c.case_id + "'", line_no);
            c.slide_ids = get_string_list(j, "slide_ids", line_no);
            cases.push_back(std::move(c));
        } else if (kind == "slide") {
            SlideRecord s;
            s.slide_id = get_string(j, "slide_id", line_no);
            s.case_id = get_string(j, "case_id", line_no);
            const std::string role = get_string(j, "role", line_no);
            if (role != "involved" && role != "uninvolved") parse_fail(line_no, "slide role '" + role + "' is unknown");
            s.role = role == "involved" ? SlideRole::involved : SlideRole::uninvolved;
            s.patch_ids = get_string_list(j, "patch_ids", line_no);
            slides.push_back(std::move(s));
        } else if (kind == "patch") {
            PatchRecord p;
            p.patch_id = get_string(j, "patch_id", line_no);
            p.slide_id = get_string(j, "slide_id", line_no);
            p.path = get_string(j, "path", line_no);
            p.observed_dx = get_category(j, "observed_dx", "patch '" + p.patch_id + "'", line_no);
            if (j.contains("split")) {
                try {
                    p.split = parse_split(get_string(j, "split", line_no));
                } catch (const ManifestError&) {
                    throw;
                } catch (const ValidationError& e) {
                    parse_fail(line_no, e.what());
                }
            }
            patches.push_back(std::move(p));
        } else {
            parse_fail(line_no, "unknown record kind '" + kind + "'");
        }
    }
    return Corpus(std::move(cases), std::move(slides), std::move(patches), LabelMode::case_level, root);
}

Corpus load_manifest(const std::filesystem::path& path, ImageCheck check) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    Corpus corpus = [&] {
        try {
            return parse_manifest(buf.str(), path.parent_path());
        } catch (const ManifestError& e) {
            throw ManifestError(e.kind(), path.string() + ": " + e.what());
        }
    }();
    if (check == ImageCheck::header) {
        for (const PatchRecord& p : corpus.patches()) {
            const std::filesystem::path file = corpus.image_path(p);
            if (!std::filesystem::exists(file)) {
                throw IoError("patch '" + p.patch_id + "' image not found: " + file.string());
            }
            const PpmHeader h = read_ppm_header(file);
            if (h.width != kPatchSize || h.height != kPatchSize) {
                throw ValidationError("patch '" + p.patch_id + "' image " + file.string() + " is " +
                                      std::to_string(h.width) + "x" + std::to_string(h.height) + ", expected 100x100");
            }
        }
    }
    return corpus;
}

std::string manifest_text(const Corpus& corpus) {
    std::string out;
    for (const CaseRecord& c : corpus.cases()) {
        json j{{"kind", "case"}, {"case_id", c.case_id}, {"diagnosis", code(c.diagnosis)}, {"slide_ids", c.slide_ids}};
        out += j.dump() + "\n";
    }
    for (const SlideRecord& s : corpus.slides()) {
        json j{{"kind", "slide"},
               {"slide_id", s.slide_id},
               {"case_id", s.case_id},
               {"role", std::string(role_name(s.role))},
               {"patch_ids", s.patch_ids}};
        out += j.dump() + "\n";
    }
    for (const PatchRecord& p : corpus.patches()) {
        json j{{"kind", "patch"},
               {"patch_id", p.patch_id},
               {"slide_id", p.slide_id},
               {"path", p.path.generic_string()},
               {"observed_dx", code(p.observed_dx)}};
        if (p.split != Split::unassigned) j["split"] = std::string(split_name(p.split));
        out += j.dump() + "\n";
    }
    return out;
}

void write_manifest(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    out << manifest_text(corpus);
    if (!out) throw IoError("failed writing manifest: " + path.string());
}

std::array<std::size_t, 3> split_unit_counts(const SplitFractions& f, std::size_t units) {
    const std::array<double, 3> fr{f.train, f.val, f.test};
    for (double v : fr) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("split fractions must lie in [0, 1]");
    }
    if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) {
        throw ValidationError("split fractions sum to " + std::to_string(fr[0] + fr[1] + fr[2]) + ", expected 1");
    }
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = fr[i] * static_cast<double>(units);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < units; ++k, ++assigned) ++counts[order[k % 3]];

    constexpr double kTolerance = 0.005;
    for (std::size_t i = 0; i < 3; ++i) {
        const double achieved = static_cast<double>(counts[i]) / static_cast<double>(units);
        if (std::abs(achieved - fr[i]) > kTolerance || (fr[i] > 0.0 && counts[i] == 0)) {
            throw ValidationError("split fractions " + std::to_string(fr[0]) + "/" + std::to_string(fr[1]) + "/" +
                                  std::to_string(fr[2]) + " are not achievable with " + std::to_string(units) +
                                  " units; nearest achievable counts are " + std::to_string(counts[0]) + "/" +
                                  std::to_string(counts[1]) + "/" + std::to_string(counts[2]));
        }
    }
    return counts;
}

Corpus assign_splits(const Corpus& corpus, const SplitOptions& options) {
    // A unit is the group of patches that must share a split.
    struct Unit {
        DiagnosticCategory category;
        std::vector<std::size_t> patches;
    };
    std::vector<Unit> units;
    std::map<std::string, std::size_t, std::less<>> patch_pos;
    for (std::size_t i = 0; i < corpus.patches().size(); ++i) patch_pos.emplace(corpus.patches()[i].patch_id, i);
    const auto slide_patches = [&](const SlideRecord& s) {
        std::vector<std::size_t> idx;
        for (const std::string& pid : s.patch_ids) idx.push_back(patch_pos.at(pid));
        return idx;
    };

    if (options.policy == SplitPolicy::image) {
        if (options.case_coherent) throw ValidationError("case-coherent splitting requires the slide policy");
        for (std::size_t i = 0; i < corpus.patches().size(); ++i) {
            units.push_back({corpus.case_of_slide(corpus.patches()[i].slide_id).diagnosis, {i}});
        }
    } else if (options.case_coherent) {
        for (const CaseRecord& c : corpus.cases()) {
            Unit u{c.diagnosis, {}};
            for (const std::string& sid : c.slide_ids) {
                const auto idx = slide_patches(corpus.slide(sid));
                u.patches.insert(u.patches.end(), idx.begin(), idx.end());
            }
            units.push_back(std::move(u));
        }
    } else {
        for (const SlideRecord& s : corpus.slides()) units.push_back({corpus.case_of_slide(s.slide_id).diagnosis, slide_patches(s)});
    }
    const std::array<std::size_t, 3> counts = split_unit_counts(options.fractions, units.size());

    std::mt19937_64 rng(options.seed);
    std::array<std::vector<std::size_t>, kCategoryCount> by_category;
    for (std::size_t i = 0; i < units.size(); ++i) by_category[code(units[i].category)].push_back(i);
    for (auto& list : by_category) std::shuffle(list.begin(), list.end(), rng);

    std::vector<std::size_t> draw_order;
    for (std::size_t round = 0; draw_order.size() < units.size(); ++round) {
        for (const auto& list : by_category) {
            if (round < list.size()) draw_order.push_back(list[round]);
        }
    }

    std::vector<Split> per_patch(corpus.patches().size(), Split::unassigned);
    for (std::size_t k = 0; k < draw_order.size(); ++k) {
        const Split s = k < counts[2] ? Split::test : k < counts[2] + counts[1] ? Split::val : Split::train;
        for (std::size_t p : units[draw_order[k]].patches) per_patch[p] = s;
    }
    return corpus.with_splits(per_patch);
}

std::vector<VoteSet> chunk_vote_sets(std::vector<VoteCandidate> candidates) {
    std::stable_sort(candidates.begin(), candidates.end(), [](const VoteCandidate& a, const VoteCandidate& b) {
        return std::tie(a.slide_id, a.patch_id) < std::tie(b.slide_id, b.patch_id);
    });
    std::vector<VoteSet> sets;
    for (std::size_t begin = 0; begin < candidates.size();) {
        std::size_t end = begin;
        while (end < candidates.size() && candidates[end].slide_id == candidates[begin].slide_id) ++end;
        const std::size_t n = end - begin;
        if (n % kVoteSetSize != 0) {
            throw ValidationError("slide '" + candidates[begin].slide_id + "' contributes " + std::to_string(n) +
                                  " patches, not a multiple of " + std::to_string(kVoteSetSize));
        }
        for (std::size_t k = begin; k < end; k += kVoteSetSize) {
            VoteSet set;
            set.slide_id = candidates[begin].slide_id;
            set.set_id = set.slide_id + "-V" + std::to_string((k - begin) / kVoteSetSize + 1);
            set.observed_dx = candidates[k].observed_dx;
            for (std::size_t j = 0; j < kVoteSetSize; ++j) {
                const VoteCandidate& c = candidates[k + j];
                if (c.observed_dx != set.observed_dx) {
                    throw ValidationError("vote set " + set.set_id + " mixes observed diagnoses (patch '" + c.patch_id + "')");
                }
                set.patch_ids[j] = c.patch_id;
            }
            sets.push_back(std::move(set));
        }
        begin = end;
    }
    return sets;
}

std::vector<VoteSet> build_vote_sets(const Corpus& corpus, Split split) {
    std::vector<VoteCandidate> candidates;
    for (const PatchRecord* p : corpus.patches_in(split)) candidates.push_back({p->patch_id, p->slide_id, p->observed_dx});
    return chunk_vote_sets(std::move(candidates));
}

Corpus permute_case_labels(const Corpus& corpus, std::uint64_t seed) {
    std::vector<DiagnosticCategory> labels;
    for (const CaseRecord& c : corpus.cases()) labels.push_back(c.diagnosis);
    std::mt19937_64 rng(seed);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::vector<CaseRecord> cases = corpus.cases();
    std::vector<SlideRecord> slides = corpus.slides();
    std::map<std::string, std::size_t, std::less<>> slide_pos;
    for (std::size_t i = 0; i < slides.size(); ++i) slide_pos.emplace(slides[i].slide_id, i);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        cases[i].diagnosis = labels[i];
        // Roles follow the new label: first slide involved iff positive.
        for (std::size_t k = 0; k < cases[i].slide_ids.size(); ++k) {
            slides[slide_pos.at(cases[i].slide_ids[k])].role =
                is_positive(labels[i]) && k == 0 ? SlideRole::involved : SlideRole::uninvolved;
        }
    }
    std::map<std::string, DiagnosticCategory, std::less<>> slide_label;
    for (const CaseRecord& c : cases) {
        for (const std::string& sid : c.slide_ids) slide_label.emplace(sid, c.diagnosis);
    }
    std::vector<PatchRecord> patches = corpus.patches();
    for (PatchRecord& p : patches) p.observed_dx = slide_label.at(p.slide_id);
    return Corpus(std::move(cases), std::move(slides), std::move(patches), LabelMode::case_level, corpus.root());
}

} // namespace slns::corpus
