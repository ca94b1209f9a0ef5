#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "compgen/error.hpp"
#include "compgen/io.hpp"
#include "test_support.hpp"

using namespace compgen;
using compgen::testing::fixture;
using compgen::testing::scratch_dir;

namespace {

std::vector<char> bytes_of(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::InvalidParameter;
}

io::MatrixF small_expected() {
    io::MatrixF m(6, 5);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 5; ++c) m(r, c) = static_cast<float>((r + 1.0) / (c + 3.0) - 0.5);
    return m;
}

}  // namespace

TEST_SUITE("io") {
    TEST_CASE("reads the independently encoded CEMB fixture") {
        const auto m = io::read_cemb(fixture("small.cemb"));
        REQUIRE(m.rows() == 6);
        REQUIRE(m.cols() == 5);
        CHECK(m == small_expected());
    }

    TEST_CASE("CEMB round trip is bit exact") {
        const auto dir = scratch_dir("cemb");
        const auto m = io::read_cemb(fixture("small.cemb"));
        io::write_cemb(dir / "copy.cemb", m);
        CHECK(bytes_of(dir / "copy.cemb") == bytes_of(fixture("small.cemb")));
        const auto grid = io::read_cemb(fixture("grid.cemb"));
        io::write_cemb(dir / "grid.cemb", grid);
        CHECK(bytes_of(dir / "grid.cemb") == bytes_of(fixture("grid.cemb")));

        io::MatrixF odd(2, 3);
        odd << -0.0F, 1e-45F, 3.4028235e38F, -1.5F, 0.1F, 7.0F;
        io::write_cemb(dir / "odd.cemb", odd);
        const auto back = io::read_cemb(dir / "odd.cemb");
        CHECK(std::memcmp(back.data(), odd.data(), sizeof(float) * 6) == 0);
    }

    TEST_CASE("CSV and CEMB encodings give the same matrix") {
        const auto from_csv = io::read_matrix(fixture("small.csv"));
        const auto from_bin = io::read_matrix(fixture("small.cemb"));
        CHECK(from_csv == from_bin);

        const auto dir = scratch_dir("csv");
        const auto grid = io::read_cemb(fixture("grid.cemb"));
        io::write_matrix_csv(dir / "grid.csv", grid);
        CHECK(io::read_matrix_csv(dir / "grid.csv") == grid);
    }

    TEST_CASE("export then ingest is bitwise equal") {
        const auto dir = scratch_dir("export");
        const auto table = io::ingest_embeddings(fixture("grid.cemb"), fixture("grid_labels.csv"));
        CHECK(table.n == 4);
        CHECK(table.rows() == 80);
        io::export_embeddings(table, dir / "t.cemb", dir / "t.csv");
        CHECK(bytes_of(dir / "t.cemb") == bytes_of(fixture("grid.cemb")));
        CHECK(bytes_of(dir / "t.csv") == bytes_of(fixture("grid_labels.csv")));
        const auto again = io::ingest_embeddings(dir / "t.cemb", dir / "t.csv");
        CHECK(again.matrix == table.matrix);
        CHECK(again.labels_c1 == table.labels_c1);
    }

    TEST_CASE("each malformed input has its own error code") {
        CHECK(code_of([] { io::read_cemb(fixture("truncated.cemb")); }) == ErrorCode::CorruptFile);
        CHECK(code_of([] { io::read_cemb(fixture("bad_magic.cemb")); }) == ErrorCode::BadMagic);
        CHECK(code_of([] { io::read_cemb(fixture("bad_version.cemb")); }) == ErrorCode::BadVersion);
        CHECK(code_of([] { io::read_cemb(fixture("missing.cemb")); }) == ErrorCode::Io);
        CHECK(code_of([] { io::ingest_embeddings(fixture("nan.cemb"), fixture("small_labels.csv")); }) ==
              ErrorCode::NanEntry);
        CHECK(code_of([] { io::ingest_embeddings(fixture("small.cemb"), fixture("short_labels.csv")); }) ==
              ErrorCode::RowCountMismatch);
        // labels beyond an explicit n
        CHECK(code_of([] { io::ingest_embeddings(fixture("small.cemb"), fixture("small_labels.csv"), 2); }) ==
              ErrorCode::InvalidInput);
    }

    TEST_CASE("labels CSV keeps extra columns and checks indices") {
        const auto dir = scratch_dir("labels");
        io::write_labels_csv(dir / "l.csv", {0, 1, 1}, {2, 0, 1}, {"position"}, {{3}, {4}, {5}});
        const auto rows = io::read_labels_csv(dir / "l.csv");
        CHECK(rows.c1 == std::vector<int>{0, 1, 1});
        CHECK(rows.c2 == std::vector<int>{2, 0, 1});
        CHECK(rows.extra_names == std::vector<std::string>{"position"});
        CHECK(rows.extra[2] == std::vector<int>{5});

        std::ofstream(dir / "gap.csv") << "index,c1,c2\n0,0,0\n2,1,1\n";
        CHECK(code_of([&] { io::read_labels_csv(dir / "gap.csv"); }) == ErrorCode::CorruptFile);
        std::ofstream(dir / "header.csv") << "id,a,b\n0,0,0\n";
        CHECK(code_of([&] { io::read_labels_csv(dir / "header.csv"); }) == ErrorCode::CorruptFile);
        std::ofstream(dir / "neg.csv") << "index,c1,c2\n0,-1,0\n";
        io::write_cemb(dir / "one.cemb", io::MatrixF::Ones(1, 2));
        CHECK(code_of([&] { io::ingest_embeddings(dir / "one.cemb", dir / "neg.csv"); }) == ErrorCode::InvalidInput);
    }

    TEST_CASE("inferred n covers the largest label") {
        const auto t = io::ingest_embeddings(fixture("small.cemb"), fixture("small_labels.csv"));
        CHECK(t.n == 3);
        CHECK(t.labels_c1 == std::vector<int>{0, 1, 0, 1, 0, 1});
        CHECK(t.labels_c2 == std::vector<int>{0, 0, 1, 1, 2, 2});
    }

    TEST_CASE("checkpoint round trip") {
        const auto dir = scratch_dir("ckpt");
        nn::TwoHeadNet<float> net(7, {5, 4}, 3, 3);
        net.initialize(9);
        io::write_checkpoint(dir / "w.cgwt", net);
        nn::TwoHeadNet<float> back(7, {5, 4}, 3, 3);
        io::read_checkpoint(dir / "w.cgwt", back);
        for (std::size_t i = 0; i < net.params().size(); ++i) CHECK(back.params()[i] == net.params()[i]);

        const auto raw = bytes_of(dir / "w.cgwt");
        CHECK(std::string(raw.begin(), raw.begin() + 4) == "CGWT");
        std::size_t expected = 12;
        for (const auto& p : net.params()) expected += 8 + 4 * static_cast<std::size_t>(p.size());
        CHECK(raw.size() == expected);

        nn::TwoHeadNet<float> other(7, {6, 4}, 3, 3);
        CHECK(code_of([&] { io::read_checkpoint(dir / "w.cgwt", other); }) == ErrorCode::CorruptFile);
    }

    TEST_CASE("dataset and model directories round trip") {
        const auto dir = scratch_dir("dataset");
        DatasetSpec spec;
        spec.family = DatasetFamily::SpriteGlyph;
        spec.image_size = 8;
        spec.concept_spec = {"g", 2, 2, {{"position", 4}, {"rotation", 3}}};
        spec.n_cell = 3;
        spec.seed = 4;
        const auto set = generate(spec, build_nk_split(2, 1), SplitTag::Train);
        io::save_dataset(dir / "d", set);
        const auto back = io::load_dataset(dir / "d");
        CHECK(back.pixels == set.pixels);
        CHECK(back.labels_c1 == set.labels_c1);
        CHECK(back.labels_c2 == set.labels_c2);
        CHECK(back.nuisance == set.nuisance);
        CHECK(back.n == 2);
        CHECK(back.combos == set.combos);
        CHECK(back.spec.concept_spec == spec.concept_spec);

        const auto model = train(set, {}, {{8}, 4, 1}, {1e-3, 2, 4, Selection::Oracle, 2});
        io::save_model(dir / "m", model);
        const auto loaded = io::load_model(dir / "m");
        CHECK(loaded.n == 2);
        CHECK(loaded.best_epoch == model.best_epoch);
        CHECK(loaded.history.size() == model.history.size());
        CHECK(embed(loaded, set).matrix == embed(model, set).matrix);
    }
}
