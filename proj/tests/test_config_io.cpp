#include "nlch/config.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

using namespace nlch;
namespace fs = std::filesystem;

namespace {

const char* minimal = "mode = fourth\ncells = 32\n";

std::string le_bytes(const void* p, std::size_t n)
{
    // the test machine is little-endian; checked below
    return std::string(static_cast<const char*>(p), n);
}

} // namespace

TEST(Config, MinimalDefaults)
{
    const RunConfig c = parse_config_text(minimal);
    EXPECT_EQ(c.mode, "fourth");
    EXPECT_EQ(c.cells, std::vector<int>{32});
    EXPECT_EQ(c.bc, "noflux");
    EXPECT_EQ(c.potential, "logarithmic");
    EXPECT_EQ(c.tau, 1e-4);
    EXPECT_EQ(c.gradient_form, "variational");
    EXPECT_EQ(c.domain(), Domain::line(32));
}

TEST(Config, CommentsAndWhitespace)
{
    const RunConfig c = parse_config_text("# header\n\n  mode=sixth  # trailing\ndelta = 1e-4\ncells = 16, 8\n"
                                          "lengths = 2, 1\nbc = periodic\nsigma=0.01\n");
    EXPECT_EQ(c.domain(), Domain(2, {16, 8, 1}, {2.0, 1.0, 1.0}, Boundary::Periodic));
    EXPECT_EQ(c.model().mode, Mode::Sixth);
    EXPECT_EQ(c.model().delta, 1e-4);
}

TEST(Config, Errors)
{
    auto parse_error_line = [](const std::string& text) {
        try {
            parse_config_text(text);
        } catch (const ParseError& e) {
            return e.line;
        }
        return -1;
    };
    EXPECT_EQ(parse_error_line(std::string(minimal) + "colour = red\n"), 3);
    EXPECT_EQ(parse_error_line(std::string(minimal) + "tau = 1e-3\ntau = 1e-4\n"), 4);
    EXPECT_EQ(parse_error_line(std::string(minimal) + "just words\n"), 3);
    EXPECT_EQ(parse_error_line(std::string(minimal) + "tau = fast\n"), 3);
    EXPECT_EQ(parse_error_line(std::string(minimal) + "bc = open\n"), 3);
    EXPECT_THROW(parse_config_text("cells = 8\n"), ValidationError);
    EXPECT_THROW(parse_config_text("mode = fourth\n"), ValidationError);
    EXPECT_THROW(parse_config_text(std::string(minimal) + "delta = 1e-3\n"), ValidationError);
    EXPECT_THROW(parse_config_text("mode = sixth\ncells = 32\n"), ValidationError);
    EXPECT_THROW(parse_config_text(std::string(minimal) + "initial_amplitude = 2\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("/nonexistent/config.txt"), ParseError);
}

TEST(Config, RoundtripIsExact)
{
    RunConfig c = parse_config_text("mode = phasefield\ncells = 12, 10\nsigma = 0.1\ncoefficient = general_quadratic\n"
                                    "a0 = 0.7\na1 = 0.1\na2 = 0.2\ninitial = cosine\ninitial_k = 2\n"
                                    "preconditioner = spectral\ndomain_guard = false\n");
    c.tau = 0.1 + 0.2; // not representable in few digits
    c.initial_seed = 0xFFFFFFFFFFFFull;
    const std::string text = serialize_config(c);
    const RunConfig back = parse_config_text(text);
    EXPECT_EQ(back, c);
    EXPECT_EQ(serialize_config(back), text);
}

TEST(Config, BuildsComponents)
{
    const RunConfig c = parse_config_text("mode = sixth\ncells = 64\ndelta = 1e-5\npotential = sixth\nh0 = 0.3\n"
                                          "lambda = 5\ncoefficient = even_quadratic\ng0 = 0.2\ng2 = -0.04\n"
                                          "initial = noise\ninitial_seed = 9\nsmoothing = h1\n");
    const ModelParams p = c.model();
    EXPECT_EQ(p.potential.family(), PotentialFamily::SixthPolynomial);
    EXPECT_DOUBLE_EQ(p.coefficient.a(1.0), 0.16);
    const Field u = c.initial_field();
    EXPECT_NEAR(mean(u), 0.0, 1e-14);
    EXPECT_EQ(u.values(), c.initial_field().values());
    const Scenario sc = c.scenario();
    EXPECT_EQ(sc.domain, c.domain());
    EXPECT_EQ(sc.stepper.tau, c.tau);
}

TEST(Snapshot, LayoutMatchesHandEncoding)
{
    const std::uint16_t probe = 1;
    unsigned char first;
    std::memcpy(&first, &probe, 1);
    ASSERT_EQ(first, 1) << "byte layout check assumes a little-endian host";

    const Domain d = Domain::line(4, 2.0, Boundary::Periodic);
    const Field f(d, std::vector<double>{0.5, -0.25, 1.0 / 3, 0.0});
    std::string expect = "CHNL";
    const std::uint32_t version = 1, dim = 1, cells = 4;
    const double len = 2.0, t = 0.75;
    const std::uint8_t bc = 1;
    expect += le_bytes(&version, 4) + le_bytes(&dim, 4) + le_bytes(&cells, 4) + le_bytes(&len, 8) +
              le_bytes(&bc, 1) + le_bytes(&t, 8);
    for (double v : f.values())
        expect += le_bytes(&v, 8);
    EXPECT_EQ(encode_snapshot(f, t), expect);
}

TEST(Snapshot, RoundtripBitExact)
{
    const Domain d(3, {4, 5, 6}, {1.0, 0.5, 2.0}, Boundary::NoFlux);
    Field f(d);
    for (std::size_t n = 0; n < f.size(); ++n)
        f[n] = counter_uniform(5, n) * 1e-300 + (n % 7 == 0 ? std::nextafter(1.0, 0.0) : 0.0);
    const auto path = (fs::temp_directory_path() / "nlch_snap.chnl").string();
    write_snapshot(f, path, 0.125);
    const Snapshot s = read_snapshot(path);
    EXPECT_EQ(s.t, 0.125);
    EXPECT_EQ(s.field.domain(), d);
    EXPECT_EQ(std::memcmp(s.field.values().data(), f.values().data(), f.size() * sizeof(double)), 0);
    fs::remove(path);
}

TEST(Snapshot, CorruptInputs)
{
    const std::string good = encode_snapshot(Field(Domain::line(8), 0.1), 0.0);
    EXPECT_THROW(decode_snapshot("XXXX" + good.substr(4)), FormatError);
    EXPECT_THROW(decode_snapshot(good.substr(0, good.size() - 3)), FormatError);
    EXPECT_THROW(decode_snapshot(good + "x"), FormatError);
    std::string bad_version = good;
    bad_version[4] = 2;
    EXPECT_THROW(decode_snapshot(bad_version), FormatError);
    std::string bad_dim = good;
    bad_dim[8] = 9;
    EXPECT_THROW(decode_snapshot(bad_dim), FormatError);
    EXPECT_THROW(decode_snapshot(""), FormatError);
    EXPECT_THROW(read_snapshot("/nonexistent/x.chnl"), FormatError);
    // a checkpoint is not a snapshot
    const Field u(Domain::line(8), 0.1);
    EXPECT_THROW(decode_snapshot(encode_checkpoint(Checkpoint{0, 1e-4, u, u})), FormatError);
}

TEST(Checkpoint, RoundtripBitExact)
{
    const Domain d = Domain::square(8, 1.0, Boundary::Periodic);
    Field u(d), w(d);
    for (std::size_t n = 0; n < u.size(); ++n) {
        u[n] = 0.3 * counter_uniform(1, n);
        w[n] = std::exp(counter_uniform(2, n) * 50);
    }
    const Checkpoint c{0.1 + 0.2, 1e-4 / 3, u, w};
    const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
    EXPECT_EQ(back.t, c.t);
    EXPECT_EQ(back.tau, c.tau);
    EXPECT_EQ(back.u.values(), u.values());
    EXPECT_EQ(back.w.values(), w.values());
    EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
    EXPECT_THROW(encode_checkpoint(Checkpoint{0, 1, u, Field(Domain::line(8))}), std::invalid_argument);
}
