// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/image.hpp"
#include "derain/metrics.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>

#include <png.h>

#include <cmath>
#include <fstream>

using namespace derain;

namespace {

void write_png8(const std::filesystem::path& p, int w, int h, int color_type, const std::vector<unsigned char>& px) {
    FILE* f = std::fopen(p.c_str(), "wb");
    REQUIRE(f);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, f);
    png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int ch = color_type == PNG_COLOR_TYPE_GRAY ? 1 : color_type == PNG_COLOR_TYPE_RGB ? 3 : 4;
    for (int y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(px.data() + y * w * ch));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

}  // namespace

TEST_SUITE("imagecore") {
    TEST_CASE("load_image scales 8-bit values to [0,1]") {
        fixture::TempDir dir("img8");
        const auto p = dir / "x.png";
        write_png8(p, 3, 1, PNG_COLOR_TYPE_RGB, {255, 255, 255, 0, 0, 0, 128, 128, 128});
        const Image img = load_image(p);
        REQUIRE(img.height() == 1);
        REQUIRE(img.width() == 3);
        CHECK(img.at(0, 0, 0) == 1.0f);
        CHECK(img.at(0, 1, 1) == 0.0f);
        CHECK(img.at(0, 2, 2) == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
        CHECK(std::abs(img.at(0, 2, 2) - 0.50196) < 1e-5);
    }

    TEST_CASE("load_image accepts gray and RGBA rasters") {
        fixture::TempDir dir("imggray");
        write_png8(dir / "g.png", 2, 1, PNG_COLOR_TYPE_GRAY, {0, 255});
        const Image g = load_image(dir / "g.png");
        CHECK(g.at(0, 1, 0) == 1.0f);
        CHECK(g.at(0, 1, 2) == 1.0f);
        write_png8(dir / "a.png", 1, 1, PNG_COLOR_TYPE_RGBA, {51, 102, 153, 0});
        const Image a = load_image(dir / "a.png");
        CHECK(a.at(0, 0, 0) == doctest::Approx(0.2));
        CHECK(a.at(0, 0, 2) == doctest::Approx(0.6));
    }

    TEST_CASE("load_image is byte-for-byte deterministic") {
        fixture::TempDir dir("imgdet");
        save_image(fixture::random_image(20, 17, 3), dir / "r.png");
        CHECK(load_image(dir / "r.png") == load_image(dir / "r.png"));
    }

    TEST_CASE("load_image reports distinct error kinds") {
        fixture::TempDir dir("imgerr");
        auto kind_of = [](const std::filesystem::path& p) {
            try {
                load_image(p);
            } catch (const IoError& e) {
                return static_cast<int>(e.kind());
            }
            return -1;
        };
        CHECK(kind_of(dir / "missing.png") == static_cast<int>(IoErrorKind::not_found));
        std::ofstream(dir / "text.png") << "definitely not an image";
        CHECK(kind_of(dir / "text.png") == static_cast<int>(IoErrorKind::unsupported_format));
        save_image(fixture::random_image(32, 32, 1), dir / "ok.png");
        {
            std::ifstream in(dir / "ok.png", std::ios::binary);
            std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            std::ofstream(dir / "cut.png", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        }
        CHECK(kind_of(dir / "cut.png") == static_cast<int>(IoErrorKind::corrupt_data));
    }

    TEST_CASE("save/load round trips") {
        fixture::TempDir dir("imgrt");
        const Image zeros(32, 32);
        save_image(zeros, dir / "z.png");
        CHECK(load_image(dir / "z.png") == zeros);

        const Image r = fixture::random_image(24, 40, 11);
        save_image(r, dir / "r.png");
        const Image back = load_image(dir / "r.png");
        double worst = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) worst = std::max(worst, std::abs(double(back.data()[i]) - r.data()[i]));
        CHECK(worst <= 1.0 / 255.0);
        CHECK(back == quantize8(r));
    }

    TEST_CASE("save_image to an unwritable path fails with write_failed") {
        fixture::TempDir dir("imgro");
        bool thrown = false;
        try {
            save_image(Image(16, 16), dir.path());  // a directory, not a file
        } catch (const IoError& e) {
            thrown = e.kind() == IoErrorKind::write_failed;
        }
        CHECK(thrown);
        CHECK_THROWS_AS(save_image(Image(16, 16), dir / "no/such/dir/x.png"), IoError);
    }

    TEST_CASE("depth maps round trip through 16-bit PNG and float maps") {
        fixture::TempDir dir("depth");
        const Map2D d = fixture::random_map(19, 23, 5);
        save_depth(d, dir / "d.png16");
        const Map2D q = load_depth(dir / "d.png16");
        CHECK(q == quantize_depth16(d));
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(q.data()[i] - d.data()[i]) <= 0.5f / 65535.0f + 1e-7f);
        save_depth(d, dir / "d.pfm");
        CHECK(load_depth(dir / "d.pfm") == d);
    }

    TEST_CASE("float map header layout") {
        fixture::TempDir dir("pfm");
        Map2D d(2, 3);
        d.at(0, 0) = 0.25f;
        d.at(1, 2) = 0.75f;
        save_depth(d, dir / "d.pfm");
        std::ifstream in(dir / "d.pfm", std::ios::binary);
        std::string magic, scale;
        int w = 0, h = 0;
        in >> magic >> w >> h >> scale;
        CHECK(magic == "Pf");
        CHECK(w == 3);
        CHECK(h == 2);
        CHECK(std::stod(scale) < 0.0);  // little-endian
        in.get();
        float first = 0.0f;
        in.read(reinterpret_cast<char*>(&first), 4);
        CHECK(first == 0.0f);  // bottom row first: d(1,0)
    }

    TEST_CASE("image shape validation") {
        CHECK_THROWS_AS(Image(0, 5), ShapeError);
        CHECK_THROWS_AS(Image(4, -1), ShapeError);
    }
}

TEST_SUITE("metrics") {
    TEST_CASE("psnr closed forms") {
        const Image x = fixture::random_image(16, 16, 2);
        CHECK(std::isinf(psnr(x, x)));
        CHECK(psnr(x, x) == kPsnrIdentical);
        CHECK(psnr(Image(16, 16, 0.0f), Image(16, 16, 1.0f)) == 0.0);
        // Uniform error 0.1 gives MSE 0.01 (within float rounding of the pixels).
        Image a(16, 16, 0.2f), b(16, 16, 0.3f);
        const double m = mse(a, b);
        CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / m)));
        CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));
    }

    TEST_CASE("psnr symmetry and monotonicity") {
        const Image t = fixture::random_image(16, 16, 3);
        const Image e = fixture::random_image(16, 16, 4);
        for (int s = 1; s < 5; ++s) {
            Image p1 = t, p2 = t;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const float err = 0.05f * (e.data()[i] - 0.5f);
                p1.data()[i] += err * s;
                p2.data()[i] += err * s * 1.5f;
            }
            CHECK(psnr(p1, t) == psnr(t, p1));
            CHECK(psnr(p2, t) < psnr(p1, t));
        }
    }

    TEST_CASE("ssim closed forms") {
        const Image x = fixture::random_image(32, 32, 9);
        CHECK(ssim(x, x) == 1.0);
        const double c1 = SsimParams{}.c1();
        CHECK(c1 == doctest::Approx(1e-4));
        CHECK(ssim(Image(16, 16, 0.0f), Image(16, 16, 1.0f)) == c1 / (1.0 + c1));
        const double a = 0.25, b = 0.75;  // exact in float
        CHECK(ssim(Image(16, 16, 0.25f), Image(16, 16, 0.75f)) == (2 * a * b + c1) / (a * a + b * b + c1));
    }

    TEST_CASE("psnr and ssim match the oracles on 50 random 16x16 pairs") {
        for (std::uint64_t s = 0; s < 50; ++s) {
            const Image a = fixture::random_image(16, 16, 300 + s);
            const Image b = fixture::random_image(16, 16, 400 + s);
            CHECK(std::abs(psnr(a, b) - oracle::psnr(a, b)) < 1e-6);
            CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
        }
    }

    TEST_CASE("ssim matches the brute-force window oracle") {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const Image a = fixture::random_image(32, 32, 100 + s);
            const Image b = fixture::random_image(32, 32, 200 + s);
            CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
        }
        // Correlated pair, far from the random-noise regime.
        Image a = fixture::random_image(24, 20, 1), b = a;
        for (float& v : b.data()) v = 0.8f * v + 0.1f;
        CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
    }

    TEST_CASE("ssim bounds and errors") {
        for (std::uint64_t s = 0; s < 5; ++s) {
            const double v = ssim(fixture::random_image(16, 16, s), fixture::random_image(16, 16, s + 50));
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        CHECK_THROWS_AS(ssim(Image(10, 16), Image(10, 16)), ShapeError);
        CHECK_THROWS_AS(ssim(Image(16, 16), Image(16, 17)), ShapeError);
        CHECK_THROWS_AS(psnr(Image(16, 16), Image(17, 16)), ShapeError);
    }

    TEST_CASE("gaussian taps are normalised and symmetric") {
        const auto t = gaussian_taps(11, 1.5);
        REQUIRE(t.size() == 11);
        double s = 0;
        for (double v : t) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
        for (int i = 0; i < 5; ++i) CHECK(t[i] == t[10 - i]);
    }

    TEST_CASE("aggregate_metrics") {
        std::vector<ImageScore> r{{"a", 20, 0.5}, {"b", 25, 0.6}, {"c", 30, 0.7}};
        const MetricsReport m = aggregate_metrics(r);
        CHECK(m.psnr.ave == 25.0);
        CHECK(m.psnr.max == 30.0);
        CHECK(m.psnr.min == 20.0);
        CHECK(m.per_image.size() == 3);

        const MetricsReport one = aggregate_metrics({{"x", 12.5, 0.25}});
        CHECK(one.psnr.ave == one.psnr.max);
        CHECK(one.psnr.min == one.psnr.max);

        CHECK_THROWS(aggregate_metrics({}));
    }

    TEST_CASE("aggregate matches a naive recomputation on 100 values") {
        Rng rng(77);
        std::vector<ImageScore> r;
        std::vector<double> p, s;
        for (int i = 0; i < 100; ++i) {
            char id[8];
            std::snprintf(id, sizeof id, "%04d", i);
            r.push_back({id, rng.uniform(10, 40), rng.uniform(0, 1)});
            p.push_back(r.back().psnr);
            s.push_back(r.back().ssim);
        }
        const MetricsReport m = aggregate_metrics(r);
        CHECK(std::abs(m.psnr.ave - oracle::mean(p)) < 1e-9);
        CHECK(std::abs(m.ssim.ave - oracle::mean(s)) < 1e-9);
        CHECK(m.psnr.max == *std::max_element(p.begin(), p.end()));
        CHECK(m.ssim.min == *std::min_element(s.begin(), s.end()));
        CHECK(m.psnr.min <= m.psnr.ave);
        CHECK(m.psnr.ave <= m.psnr.max);
    }

    TEST_CASE("infinite psnr is excluded from the average") {
        const double inf = kPsnrIdentical;
        const MetricsReport m = aggregate_metrics({{"a", 20, 1}, {"b", inf, 1}, {"c", 30, 1}});
        CHECK(m.psnr.ave == 25.0);
        CHECK(m.psnr.max == inf);
        CHECK(m.psnr.min == 20.0);
        CHECK(std::isinf(aggregate_metrics({{"a", inf, 1}}).psnr.ave));
    }

    TEST_CASE("aggregation is keyed by id, not input order") {
        std::vector<ImageScore> a{{"b", 21.1, 0.3}, {"a", 20.7, 0.9}, {"c", 33.3, 0.1}};
        std::vector<ImageScore> b{a[2], a[0], a[1]};
        const auto ma = aggregate_metrics(a), mb = aggregate_metrics(b);
        CHECK(ma.psnr.ave == mb.psnr.ave);
        CHECK(ma.per_image[0].id == "a");
    }
}
