#include "corpus_util.hpp"

#include "slnscreen/corpus.hpp"
#include "slnscreen/ppm.hpp"

#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

using namespace slns;
using namespace slns::corpus;

namespace {

// Replaces the first `from` at or after the first occurrence of `anchor`.
std::string edit(std::string text, const std::string& anchor, const std::string& from, const std::string& to) {
    const auto at = text.find(anchor);
    REQUIRE(at != std::string::npos);
    const auto pos = text.find(from, at);
    REQUIRE(pos != std::string::npos);
    return text.replace(pos, from.size(), to);
}

ManifestError::Kind rejection(const std::string& text, std::string* message = nullptr) {
    try {
        parse_manifest(text);
    } catch (const ManifestError& e) {
        if (message) *message = e.what();
        return e.kind();
    }
    FAIL("manifest accepted");
    return ManifestError::Kind::parse;
}

std::map<Split, std::size_t> split_sizes(const Corpus& c) {
    return {{Split::train, c.count(Split::train)}, {Split::val, c.count(Split::val)}, {Split::test, c.count(Split::test)}};
}

} // namespace

TEST_CASE("default layout: 34 cases, 68 slides, 2720 patches") {
    const Corpus c = testutil::layout_corpus();
    CHECK(c.cases().size() == 34);
    CHECK(c.slides().size() == 68);
    CHECK(c.patches().size() == 2720);
    CHECK(Layout{}.patch_count() == 2720);
    std::size_t involved = 0;
    for (const auto& s : c.slides()) involved += s.role == SlideRole::involved;
    CHECK(involved == 18);  // micro + macro cases
}

TEST_CASE("manifest text round trip") {
    const Corpus c = assign_splits(testutil::layout_corpus(), {});
    const std::string text = manifest_text(c);
    const Corpus back = parse_manifest(text);
    CHECK(manifest_text(back) == text);
    CHECK(back.count(Split::test) == 320);
    // Split field is optional.
    const Corpus bare = parse_manifest(manifest_text(testutil::layout_corpus()));
    CHECK(bare.count(Split::unassigned) == 2720);
}

TEST_CASE("manifest rejections are named") {
    const std::string good = manifest_text(testutil::layout_corpus());
    std::string msg;

    CHECK(rejection(edit(good, "\"observed_dx\":0,\"patch_id\":\"C03-S1-P07\"", "\"observed_dx\":0",
                         "\"observed_dx\":5"),
                    &msg) == ManifestError::Kind::unknown_category);
    CHECK(msg.find("C03-S1-P07") != std::string::npos);
    CHECK(msg.find("5") != std::string::npos);

    CHECK(rejection(edit(good, "\"kind\":\"case\"", "\"C01-S2\"", "\"C99-S2\""), &msg) ==
          ManifestError::Kind::missing_reference);
    CHECK(msg.find("C99-S2") != std::string::npos);

    CHECK(rejection(edit(good, "\"patch_ids\":[\"C02-S1-P01\"", ",\"C02-S1-P40\"", ""), &msg) ==
          ManifestError::Kind::wrong_count);
    CHECK(msg.find("39 patches") != std::string::npos);

    CHECK(rejection(edit(good, "\"kind\":\"case\",\"slide_ids\":[\"C01-S1\",\"C01-S2\"]", "\"C01-S2\"", "\"C01-S1\""),
                    &msg) == ManifestError::Kind::duplicate_id);

    const auto first_patch = good.find("{\"kind\":\"patch\"");
    const auto end_line = good.find('\n', first_patch);
    const std::string dup = good + good.substr(first_patch, end_line - first_patch + 1);
    CHECK(rejection(dup, &msg) == ManifestError::Kind::duplicate_id);

    CHECK(rejection(good + "{not json}\n", &msg) == ManifestError::Kind::parse);
    CHECK(msg.find("line 2823") != std::string::npos);
    CHECK(rejection(good + "{\"kind\":\"tile\"}\n") == ManifestError::Kind::parse);

    // Patch label must agree with its case.
    CHECK(rejection(edit(good, "\"observed_dx\":3,\"patch_id\":\"C34-S2-P01\"", "\"observed_dx\":3",
                         "\"observed_dx\":0")) == ManifestError::Kind::inconsistent);
    // A positive case needs exactly one involved slide.
    CHECK(rejection(edit(good, "\"patch_ids\":[\"C34-S1-P01\"", "\"involved\"", "\"uninvolved\"")) ==
          ManifestError::Kind::inconsistent);
    CHECK(rejection(edit(good, "\"patch_id\":\"C01-S1-P01\"", "\"patch_id\"", "\"split\":\"dev\",\"patch_id\""), &msg) ==
          ManifestError::Kind::parse);
    CHECK(msg.find("dev") != std::string::npos);
}

TEST_CASE("load_manifest reports I/O and image-header problems") {
    const auto dir = testutil::scratch_dir("manifest-io");
    CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl"), IoError);
    write_manifest(testutil::layout_corpus(), dir / "manifest.jsonl");
    CHECK(load_manifest(dir / "manifest.jsonl", ImageCheck::none).patches().size() == 2720);
    CHECK_THROWS_AS(load_manifest(dir / "manifest.jsonl", ImageCheck::header), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("split counts") {
    using A = std::array<std::size_t, 3>;
    CHECK(split_unit_counts({}, 68) == A{54, 6, 8});
    CHECK(split_unit_counts({}, 2720) == A{2160, 240, 320});
    CHECK(split_unit_counts({}, 34) == A{27, 3, 4});
    CHECK_THROWS_AS(split_unit_counts({}, 8), ValidationError);
    CHECK_THROWS_AS(split_unit_counts({0.5, 0.5, 0.1}, 100), ValidationError);
    CHECK(split_unit_counts({0.8, 0.1, 0.1}, 10) == A{8, 1, 1});
}

TEST_CASE("assign_splits: both policies hit 2160/240/320") {
    const Corpus base = testutil::layout_corpus();
    const std::map<Split, std::size_t> want{{Split::train, 2160}, {Split::val, 240}, {Split::test, 320}};
    for (SplitPolicy policy : {SplitPolicy::slide, SplitPolicy::image}) {
        CAPTURE(policy_name(policy));
        const Corpus c = assign_splits(base, {{}, policy, false, 7});
        CHECK(split_sizes(c) == want);
        CHECK(manifest_text(assign_splits(base, {{}, policy, false, 7})) == manifest_text(c));
        CHECK(manifest_text(assign_splits(base, {{}, policy, false, 8})) != manifest_text(c));
    }
    const Corpus coherent = assign_splits(base, {{}, SplitPolicy::slide, true, 3});
    CHECK(split_sizes(coherent) == want);
    CHECK_THROWS_AS(assign_splits(base, {{}, SplitPolicy::image, true, 3}), ValidationError);
}

TEST_CASE("assign_splits: slide policy keeps slides whole, case-coherent keeps cases whole") {
    const Corpus base = testutil::layout_corpus();
    for (bool coherent : {false, true}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Corpus c = assign_splits(base, {{}, SplitPolicy::slide, coherent, seed});
            std::map<std::string, std::set<Split>> per_slide, per_case;
            for (const auto& p : c.patches()) {
                per_slide[p.slide_id].insert(p.split);
                per_case[c.slide(p.slide_id).case_id].insert(p.split);
            }
            for (const auto& [id, splits] : per_slide) CHECK(splits.size() == 1);
            std::size_t straddling = 0;
            for (const auto& [id, splits] : per_case) straddling += splits.size() > 1;
            if (coherent) CHECK(straddling == 0);
            // Stratification puts every category into the test split.
            std::set<DiagnosticCategory> test_categories;
            for (const auto* p : c.patches_in(Split::test)) test_categories.insert(p->observed_dx);
            CHECK(test_categories.size() == 4);
        }
    }
}

TEST_CASE("vote sets") {
    const Corpus c = assign_splits(testutil::layout_corpus(), {});
    const auto sets = build_vote_sets(c);
    REQUIRE(sets.size() == 64);
    std::set<std::string> seen;
    for (const auto& s : sets) {
        CHECK(s.set_id.rfind(s.slide_id + "-V", 0) == 0);
        for (const auto& pid : s.patch_ids) {
            CHECK(seen.insert(pid).second);
            const auto& p = c.patch(pid);
            CHECK(p.slide_id == s.slide_id);
            CHECK(p.split == Split::test);
            CHECK(p.observed_dx == s.observed_dx);
        }
        CHECK(std::is_sorted(s.patch_ids.begin(), s.patch_ids.end()));
    }
    CHECK(seen.size() == 320);

    std::vector<VoteCandidate> seven;
    for (int i = 0; i < 7; ++i) seven.push_back({"P" + std::to_string(i), "S1", DiagnosticCategory::negative});
    try {
        chunk_vote_sets(seven);
        FAIL("7 patches accepted");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("'S1' contributes 7 patches") != std::string::npos);
    }
    seven.pop_back();
    seven.pop_back();
    const auto five = chunk_vote_sets(seven);
    REQUIRE(five.size() == 1);
    CHECK(five[0].set_id == "S1-V1");
    seven[2].observed_dx = DiagnosticCategory::macrometastasis;
    CHECK_THROWS_AS(chunk_vote_sets(seven), ValidationError);
}

TEST_CASE("slide label mode marks uninvolved slides negative") {
    const Corpus c = testutil::layout_corpus();
    const Corpus s = c.relabeled(LabelMode::slide_level);
    std::size_t negative = 0;
    for (const auto& p : s.patches()) negative += p.observed_dx == DiagnosticCategory::negative;
    CHECK(negative == (10 + 6) * 80 + 18 * 40);
    CHECK(s.relabeled(LabelMode::case_level).patches().size() == 2720);
    CHECK(manifest_text(s.relabeled(LabelMode::case_level)) == manifest_text(c));
}

TEST_CASE("permute_case_labels keeps the label multiset and hierarchy consistent") {
    const Corpus c = assign_splits(testutil::layout_corpus(), {});
    const Corpus p = permute_case_labels(c, 11);
    std::multiset<DiagnosticCategory> before, after;
    for (const auto& r : c.cases()) before.insert(r.diagnosis);
    for (const auto& r : p.cases()) after.insert(r.diagnosis);
    CHECK(before == after);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < c.cases().size(); ++i) moved += c.cases()[i].diagnosis != p.cases()[i].diagnosis;
    CHECK(moved > 0);
    CHECK(manifest_text(permute_case_labels(c, 11)) == manifest_text(p));
    CHECK(p.count(Split::test) == 320);
}

TEST_CASE("PPM decoding") {
    RgbImage black{100, 100, std::vector<std::uint8_t>(30000, 0)};
    RgbImage white{100, 100, std::vector<std::uint8_t>(30000, 255)};
    const Tensor b = patch_tensor(decode_ppm(encode_ppm(black)));
    const Tensor w = patch_tensor(decode_ppm(encode_ppm(white)));
    CHECK(b.shape() == Shape{100, 100, 3});
    CHECK(std::all_of(b.values().begin(), b.values().end(), [](float v) { return v == 0.0f; }));
    CHECK(std::all_of(w.values().begin(), w.values().end(), [](float v) { return v == 1.0f; }));

    RgbImage narrow{99, 100, std::vector<std::uint8_t>(99 * 100 * 3, 7)};
    const RgbImage back = decode_ppm(encode_ppm(narrow));
    CHECK(back.width == 99);
    CHECK(back.pixels == narrow.pixels);
    try {
        patch_tensor(back);
        FAIL("99x100 accepted");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("99") != std::string::npos);
    }

    const std::string commented = "P6\n# scanner\n2 1 # w h\n255\n";
    std::vector<std::uint8_t> bytes(commented.begin(), commented.end());
    for (std::uint8_t v : {1, 2, 3, 4, 5, 6}) bytes.push_back(v);
    const RgbImage tiny = decode_ppm(bytes);
    CHECK(tiny.width == 2);
    CHECK(tiny.pixels == std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6});
    bytes.pop_back();
    CHECK_THROWS_AS(decode_ppm(bytes), ValidationError);

    const std::string p3 = "P3\n1 1\n255\n0 0 0\n";
    CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(p3.begin(), p3.end())), ValidationError);
    const std::string deep = "P6\n1 1\n65535\n";
    std::vector<std::uint8_t> deep_bytes(deep.begin(), deep.end());
    deep_bytes.resize(deep_bytes.size() + 6, 0);
    CHECK_THROWS_AS(decode_ppm(deep_bytes), ValidationError);

    const auto dir = testutil::scratch_dir("ppm");
    write_ppm(white, dir / "w.ppm");
    CHECK(load_patch_image(dir / "w.ppm") == w);
    CHECK(read_ppm_header(dir / "w.ppm").width == 100);
    CHECK_THROWS_AS(read_ppm(dir / "absent.ppm"), IoError);
    std::filesystem::remove_all(dir);
}
