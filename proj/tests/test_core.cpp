#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "umtl/bundle.hpp"
#include "umtl/digest.hpp"
#include "umtl/image.hpp"
#include "umtl/parallel.hpp"
#include "umtl/rng.hpp"
#include "umtl/tensor.hpp"

namespace fs = std::filesystem;
using namespace umtl;

namespace {
fs::path temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("umtl_core_" + std::to_string(counter++));
    fs::create_directories(p);
    return p;
}
}  // namespace

TEST_CASE("rng streams are reproducible and seed-sensitive") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        REQUIRE(x == b.uniform());
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 10; ++i) differs |= a2.normal() != c.normal();
    REQUIRE(differs);
}

TEST_CASE("normal samples have roughly standard moments") {
    Rng rng(7);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sum2 += x * x;
    }
    REQUIRE(std::abs(sum / n) < 0.03);
    REQUIRE(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("mix_seed separates stages and indices") {
    REQUIRE(mix_seed(1, "tplg", 0) != mix_seed(1, "tplg", 1));
    REQUIRE(mix_seed(1, "tplg", 0) != mix_seed(1, "tlc", 0));
    REQUIRE(mix_seed(1, "tplg", 2) == mix_seed(1, "tplg", 2));
    REQUIRE(mix_seed(1, "tplg", 0) != mix_seed(2, "tplg", 0));
}

TEST_CASE("sha256 matches known vectors") {
    REQUIRE(sha256_hex(std::string("")) ==
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    REQUIRE(sha256_hex(std::string("abc")) ==
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("bundle round-trips arrays and metadata bit-exactly") {
    Rng rng(11);
    Bundle b;
    b.set_meta("slide_id", "slide with spaces ok");
    b.set_meta("n", "3");
    Tensor t = Tensor::randn({2, 3, 4}, rng);
    b.f64.emplace_back("pixels", t);
    b.i64.emplace_back("labels", std::vector<int64_t>{0, 1, -1});

    fs::path dir = temp_dir();
    const std::string path = (dir / "bag.umtl").string();
    save_bundle(path, b);
    Bundle r = load_bundle(path);

    REQUIRE(r.meta_or_throw("slide_id") == "slide with spaces ok");
    const Tensor* rt = r.find_f64("pixels");
    REQUIRE(rt != nullptr);
    REQUIRE(rt->shape == t.shape);
    REQUIRE(rt->v == t.v);
    const auto* rl = r.find_i64("labels");
    REQUIRE(rl != nullptr);
    REQUIRE(*rl == std::vector<int64_t>{0, 1, -1});

    // digest is stable across identical writes
    const std::string d1 = sha256_file(path);
    save_bundle(path, b);
    REQUIRE(sha256_file(path) == d1);
    fs::remove_all(dir);
}

TEST_CASE("truncated bundle payload is rejected") {
    fs::path dir = temp_dir();
    const std::string path = (dir / "trunc.umtl").string();
    Bundle b;
    b.f64.emplace_back("x", Tensor::full({8}, 1.0));
    save_bundle(path, b);
    fs::resize_file(path, fs::file_size(path) - 9);
    REQUIRE_THROWS_AS(load_bundle(path), Error);
    fs::remove_all(dir);
}

TEST_CASE("ppm round-trip at 8-bit resolution") {
    Tensor img({3, 5, 7});
    Rng rng(3);
    for (double& x : img.v) x = rng.uniform();
    fs::path dir = temp_dir();
    const std::string path = (dir / "img.ppm").string();
    write_ppm(path, img);
    Tensor back = read_ppm(path);
    REQUIRE(back.shape == img.shape);
    for (int64_t i = 0; i < img.numel(); ++i)
        REQUIRE(std::abs(back.v[i] - img.v[i]) <= 0.5 / 255.0 + 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("parallel_chunks covers every index exactly once") {
    const int64_t n = 1003;
    std::vector<int> hits(n, 0);
    parallel_chunks(n, 17, [&](int64_t, int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) hits[static_cast<size_t>(i)]++;
    });
    for (int h : hits) REQUIRE(h == 1);
}

TEST_CASE("chunked reduction is invariant to thread count") {
    // per-chunk partial sums reduced in chunk order must match sequential
    const int64_t n = 501;
    std::vector<double> vals(n);
    Rng rng(5);
    for (auto& v : vals) v = rng.normal() * 1e6;

    auto run = [&](const char* threads) {
        if (threads)
            setenv("UMTL_THREADS", threads, 1);
        else
            unsetenv("UMTL_THREADS");
        const int64_t chunks = chunk_count(n, 16);
        std::vector<double> partial(static_cast<size_t>(chunks), 0.0);
        parallel_chunks(n, 16, [&](int64_t c, int64_t begin, int64_t end) {
            for (int64_t i = begin; i < end; ++i) partial[static_cast<size_t>(c)] += vals[static_cast<size_t>(i)];
        });
        double total = 0.0;
        for (double p : partial) total += p;
        return total;
    };
    const double t1 = run("1");
    const double t4 = run("4");
    unsetenv("UMTL_THREADS");
    REQUIRE(t1 == t4);  // bitwise
}
