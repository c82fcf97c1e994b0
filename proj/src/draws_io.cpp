#include "sacebart/draws_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "sacebart/errors.hpp"

namespace sacebart {

namespace {
constexpr char kMagic[8] = {'S', 'B', 'D', 'R', 'A', 'W', 'S', '1'};
}

void write_draws(const std::string& path, const PosteriorDraws& draws) {
    nlohmann::json meta = draws.meta;
    meta["n_units"] = draws.n_units;
    meta["n_retained"] = draws.n_retained;
    const std::string mj = meta.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(kMagic, 8);
    const std::uint64_t len = mj.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(mj.data(), static_cast<std::streamsize>(mj.size()));
    out.write(reinterpret_cast<const char*>(draws.strata.data()),
              static_cast<std::streamsize>(draws.strata.size()));
    out.write(reinterpret_cast<const char*>(draws.m111.data()),
              static_cast<std::streamsize>(draws.m111.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(draws.m110.data()),
              static_cast<std::streamsize>(draws.m110.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(draws.sigma2.data()),
              static_cast<std::streamsize>(draws.sigma2.size() * sizeof(double)));
    if (!out) throw DataError("write failed for '" + path + "'");
}

PosteriorDraws read_draws(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open draws file '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("'" + path + "' is not a draws file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || len > (1ull << 32)) throw DataError("corrupt draws metadata length");
    std::string mj(len, '\0');
    in.read(mj.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("truncated draws metadata");

    PosteriorDraws d;
    try {
        d.meta = nlohmann::json::parse(mj);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed draws metadata: ") + e.what());
    }
    d.n_units = d.meta.at("n_units").get<std::size_t>();
    d.n_retained = d.meta.at("n_retained").get<std::size_t>();
    const std::size_t cells = d.n_retained * d.n_units;
    d.strata.resize(cells);
    d.m111.resize(cells);
    d.m110.resize(cells);
    d.sigma2.resize(d.n_retained * 3);
    in.read(reinterpret_cast<char*>(d.strata.data()), static_cast<std::streamsize>(cells));
    in.read(reinterpret_cast<char*>(d.m111.data()),
            static_cast<std::streamsize>(cells * sizeof(double)));
    in.read(reinterpret_cast<char*>(d.m110.data()),
            static_cast<std::streamsize>(cells * sizeof(double)));
    in.read(reinterpret_cast<char*>(d.sigma2.data()),
            static_cast<std::streamsize>(d.n_retained * 3 * sizeof(double)));
    if (!in) throw DataError("truncated draws columns in '" + path + "'");
    for (std::uint8_t s : d.strata)
        if (s > 2) throw DataError("draws file contains an invalid stratum code");
    return d;
}

}  // namespace sacebart
