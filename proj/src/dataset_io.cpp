#include "cnncap/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cnncap/error.hpp"
#include "cnncap/textio.hpp"

namespace cnncap {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'C', 'A', 'P'};
constexpr char kChannelTag[4] = {'B', 'M', 'T', '\0'};
constexpr char kMetaMagic[4] = {'M', 'E', 'T', 'A'};

template <class T>
void put(std::ostream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& what)
{
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw DataError("truncated dataset while reading " + what);
    return v;
}

} // namespace

std::vector<std::pair<std::size_t, std::size_t>> GridDataset::structure_groups() const
{
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].x.task == TaskKind::total)
            groups.emplace_back(i, i + 1);
        else if (groups.empty())
            throw DataError("dataset starts with a coupling record; expected a total record first");
        else
            groups.back().second = i + 1;
    }
    return groups;
}

std::uint64_t GridDataset::fingerprint() const
{
    std::uint64_t h = text::fnv1a64(&L, sizeof L);
    for (const auto& s : samples) {
        const auto task = static_cast<std::uint8_t>(s.x.task);
        h = text::fnv1a64(&task, 1, h);
        h = text::fnv1a64(&s.x.env_id, sizeof s.x.env_id, h);
        h = text::fnv1a64(&s.target, sizeof s.target, h);
        h = text::fnv1a64(s.x.values.data(), s.x.values.size() * sizeof(float), h);
    }
    return h;
}

void write_dataset(const std::filesystem::path& path, const GridDataset& ds)
{
    const auto groups = ds.structure_groups();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write dataset: " + path.string());
    out.write(kMagic, 4);
    put(out, kDatasetVersion);
    put(out, static_cast<std::uint32_t>(ds.L));
    put(out, static_cast<std::uint64_t>(ds.samples.size()));
    out.write(kChannelTag, 4);
    const std::size_t width = static_cast<std::size_t>(kChannels) * ds.L;
    for (const auto& s : ds.samples) {
        if (s.x.L != ds.L || s.x.values.size() != width)
            throw DataError("sample of structure '" + s.structure_id + "' does not match dataset L");
        put(out, static_cast<std::uint8_t>(s.x.task));
        put(out, static_cast<std::int32_t>(s.x.env_id));
        put(out, s.target);
        out.write(reinterpret_cast<const char*>(s.x.values.data()), static_cast<std::streamsize>(width * sizeof(float)));
    }
    std::string meta;
    for (const auto& [b, e] : groups)
        meta += "structure " + ds.samples[b].structure_id + "\n";
    for (const auto& line : ds.meta)
        meta += line + "\n";
    out.write(kMetaMagic, 4);
    put(out, static_cast<std::uint64_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    if (!out)
        throw DataError("write failed: " + path.string());
}

GridDataset read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open dataset: " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(path.string() + ": not an encoded dataset (bad magic)");
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kDatasetVersion)
        throw DataError(path.string() + ": unsupported dataset version " + std::to_string(version));
    GridDataset ds;
    ds.L = static_cast<int>(get<std::uint32_t>(in, "L"));
    const auto count = get<std::uint64_t>(in, "count");
    char tag[4];
    if (!in.read(tag, 4) || std::memcmp(tag, kChannelTag, 4) != 0)
        throw DataError(path.string() + ": unknown channel order tag");
    if (ds.L <= 0 || ds.L > (1 << 20))
        throw DataError(path.string() + ": implausible L " + std::to_string(ds.L));

    const std::size_t width = static_cast<std::size_t>(kChannels) * ds.L;
    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        const auto task = get<std::uint8_t>(in, "task");
        if (task > 1)
            throw DataError(path.string() + ": bad task byte " + std::to_string(task));
        s.x.task = static_cast<TaskKind>(task);
        s.x.env_id = get<std::int32_t>(in, "env_id");
        s.target = get<double>(in, "target");
        s.x.L = ds.L;
        s.x.values.resize(width);
        if (!in.read(reinterpret_cast<char*>(s.x.values.data()), static_cast<std::streamsize>(width * sizeof(float))))
            throw DataError("truncated dataset while reading features: " + path.string());
    }

    const auto groups = ds.structure_groups();
    std::vector<std::string> ids;
    char meta_magic[4];
    if (in.read(meta_magic, 4)) {
        if (std::memcmp(meta_magic, kMetaMagic, 4) != 0)
            throw DataError(path.string() + ": trailing bytes after records");
        const auto n = get<std::uint64_t>(in, "meta length");
        std::string meta(n, '\0');
        if (!in.read(meta.data(), static_cast<std::streamsize>(n)))
            throw DataError(path.string() + ": truncated metadata");
        for (auto line : text::split(meta, '\n')) {
            if (line.empty())
                continue;
            if (line.substr(0, 10) == "structure ")
                ids.emplace_back(line.substr(10));
            else
                ds.meta.emplace_back(line);
        }
    }
    if (!ids.empty() && ids.size() != groups.size())
        throw DataError(path.string() + ": metadata lists " + std::to_string(ids.size()) + " structures, records hold " +
                        std::to_string(groups.size()));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::string id = ids.empty() ? "s" + std::to_string(g) : ids[g];
        for (std::size_t i = groups[g].first; i < groups[g].second; ++i)
            ds.samples[i].structure_id = id;
    }
    return ds;
}

} // namespace cnncap
