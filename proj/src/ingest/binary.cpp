#include "vulbin/ingest/binary.hpp"

#include "vulbin/common/error.hpp"
#include "vulbin/common/hash.hpp"

#include <fstream>
#include <optional>

namespace vulbin::ingest {

namespace fs = std::filesystem;

namespace {

// Bounds-checked little/big-endian reads over the raw image.
class ByteView {
public:
    ByteView(std::span<const std::uint8_t> data, bool big_endian) : data_(data), big_(big_endian) {}

    std::optional<std::uint64_t> read(std::uint64_t offset, unsigned width) const {
        if (offset > data_.size() || width > data_.size() - offset) return std::nullopt;
        std::uint64_t v = 0;
        for (unsigned i = 0; i < width; ++i) {
            unsigned shift = big_ ? 8 * (width - 1 - i) : 8 * i;
            v |= static_cast<std::uint64_t>(data_[offset + i]) << shift;
        }
        return v;
    }
    std::uint64_t u8(std::uint64_t off) const { return read(off, 1).value_or(0); }
    std::optional<std::uint64_t> u16(std::uint64_t off) const { return read(off, 2); }
    std::optional<std::uint64_t> u32(std::uint64_t off) const { return read(off, 4); }
    std::optional<std::uint64_t> u64(std::uint64_t off) const { return read(off, 8); }
    std::size_t size() const { return data_.size(); }

private:
    std::span<const std::uint8_t> data_;
    bool big_;
};

bool has_prefix(std::span<const std::uint8_t> b, std::initializer_list<std::uint8_t> magic) {
    if (b.size() < magic.size()) return false;
    std::size_t i = 0;
    for (auto m : magic) {
        if (b[i++] != m) return false;
    }
    return true;
}

// ---- ELF ------------------------------------------------------------------

struct ElfLayout {
    bool is64;
    bool big;
};

ElfLayout elf_layout(std::span<const std::uint8_t> b) {
    return {b.size() > 4 && b[4] == 2, b.size() > 5 && b[5] == 2};
}

Architecture elf_arch(std::span<const std::uint8_t> b) {
    auto layout = elf_layout(b);
    ByteView v(b, layout.big);
    auto machine = v.u16(18);
    if (!machine) return {ArchKind::other, "truncated"};
    switch (*machine) {
    case 3: return {ArchKind::x86, {}};
    case 62: return {ArchKind::x86_64, {}};
    case 40: return {ArchKind::arm, {}};
    case 183: return {ArchKind::aarch64, {}};
    default: return {ArchKind::other, "e_machine=" + std::to_string(*machine)};
    }
}

bool elf_stripped(std::span<const std::uint8_t> b) {
    auto [is64, big] = elf_layout(b);
    ByteView v(b, big);
    auto shoff = is64 ? v.u64(0x28) : v.u32(0x20);
    auto shentsize = v.u16(is64 ? 0x3A : 0x2E);
    auto shnum = v.u16(is64 ? 0x3C : 0x30);
    if (!shoff || !shentsize || !shnum || *shoff == 0 || *shentsize == 0) return true;

    std::uint64_t count = *shnum;
    if (count == 0) {
        // Extended numbering: real count lives in section 0's sh_size.
        auto ext = is64 ? v.u64(*shoff + 0x20) : v.u32(*shoff + 0x14);
        if (!ext) return true;
        count = *ext;
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t sh = *shoff + i * *shentsize;
        auto type = v.u32(sh + 4);
        if (!type) return true;
        if (*type != 2) continue;  // SHT_SYMTAB
        auto off = is64 ? v.u64(sh + 0x18) : v.u32(sh + 0x10);
        auto size = is64 ? v.u64(sh + 0x20) : v.u32(sh + 0x14);
        auto entsize = is64 ? v.u64(sh + 0x38) : v.u32(sh + 0x24);
        if (!off || !size || !entsize || *entsize == 0) continue;
        for (std::uint64_t s = 0; s + *entsize <= *size; s += *entsize) {
            std::uint64_t sym = *off + s;
            std::uint64_t info = v.u8(sym + (is64 ? 4 : 12));
            auto shndx = v.u16(sym + (is64 ? 6 : 14));
            if (!shndx) break;
            if ((info & 0xF) == 2 && *shndx != 0) return false;  // defined STT_FUNC
        }
    }
    return true;
}

// ---- PE -------------------------------------------------------------------

std::optional<std::uint64_t> pe_header_offset(std::span<const std::uint8_t> b) {
    ByteView v(b, false);
    auto lfanew = v.u32(0x3C);
    if (!lfanew) return std::nullopt;
    auto sig = v.u32(*lfanew);
    if (!sig || *sig != 0x00004550) return std::nullopt;  // "PE\0\0"
    return *lfanew + 4;
}

Architecture pe_arch(std::span<const std::uint8_t> b, std::uint64_t coff) {
    ByteView v(b, false);
    auto machine = v.u16(coff).value_or(0);
    switch (machine) {
    case 0x14C: return {ArchKind::x86, {}};
    case 0x8664: return {ArchKind::x86_64, {}};
    case 0x1C0:
    case 0x1C4: return {ArchKind::arm, {}};
    case 0xAA64: return {ArchKind::aarch64, {}};
    default: return {ArchKind::other, "machine=" + std::to_string(machine)};
    }
}

bool pe_stripped(std::span<const std::uint8_t> b) {
    auto coff = pe_header_offset(b);
    if (!coff) return true;
    ByteView v(b, false);
    auto symptr = v.u32(*coff + 8);
    auto nsyms = v.u32(*coff + 12);
    return !symptr || !nsyms || *symptr == 0 || *nsyms == 0;
}

// ---- Mach-O ---------------------------------------------------------------

struct MachLayout {
    bool is64;
    bool big;
};

std::optional<MachLayout> macho_layout(std::span<const std::uint8_t> b) {
    if (has_prefix(b, {0xCE, 0xFA, 0xED, 0xFE})) return MachLayout{false, false};
    if (has_prefix(b, {0xCF, 0xFA, 0xED, 0xFE})) return MachLayout{true, false};
    if (has_prefix(b, {0xFE, 0xED, 0xFA, 0xCE})) return MachLayout{false, true};
    if (has_prefix(b, {0xFE, 0xED, 0xFA, 0xCF})) return MachLayout{true, true};
    return std::nullopt;
}

Architecture macho_arch(std::span<const std::uint8_t> b, MachLayout layout) {
    ByteView v(b, layout.big);
    auto cpu = v.u32(4).value_or(0);
    switch (cpu) {
    case 7: return {ArchKind::x86, {}};
    case 0x01000007: return {ArchKind::x86_64, {}};
    case 12: return {ArchKind::arm, {}};
    case 0x0100000C: return {ArchKind::aarch64, {}};
    default: return {ArchKind::other, "cputype=" + std::to_string(cpu)};
    }
}

bool macho_stripped(std::span<const std::uint8_t> b, MachLayout layout) {
    ByteView v(b, layout.big);
    auto ncmds = v.u32(16);
    if (!ncmds) return true;
    std::uint64_t cmd_off = layout.is64 ? 32 : 28;
    for (std::uint64_t i = 0; i < *ncmds; ++i) {
        auto cmd = v.u32(cmd_off);
        auto cmdsize = v.u32(cmd_off + 4);
        if (!cmd || !cmdsize || *cmdsize == 0) return true;
        if (*cmd == 0x2) {  // LC_SYMTAB
            auto symoff = v.u32(cmd_off + 8);
            auto nsyms = v.u32(cmd_off + 12);
            if (!symoff || !nsyms) return true;
            std::uint64_t entry = layout.is64 ? 16 : 12;
            for (std::uint64_t s = 0; s < *nsyms; ++s) {
                std::uint64_t sym = *symoff + s * entry;
                if (sym + entry > v.size()) break;
                std::uint64_t type = v.u8(sym + 4);
                if ((type & 0xE0) == 0 && (type & 0x0E) == 0x0E) return false;  // !N_STAB && N_SECT
            }
            return true;
        }
        cmd_off += *cmdsize;
    }
    return true;
}

}  // namespace

std::string Architecture::name() const {
    switch (kind) {
    case ArchKind::x86: return "x86";
    case ArchKind::x86_64: return "x86_64";
    case ArchKind::arm: return "arm";
    case ArchKind::aarch64: return "aarch64";
    case ArchKind::other: return "other(" + label + ")";
    }
    return "other";
}

std::string to_string(ContainerFormat format) {
    switch (format) {
    case ContainerFormat::ELF: return "ELF";
    case ContainerFormat::PE: return "PE";
    case ContainerFormat::MachO: return "MachO";
    case ContainerFormat::Unknown: return "Unknown";
    }
    return "Unknown";
}

BinaryArtifact inspect_bytes(std::vector<std::uint8_t> bytes, fs::path path) {
    BinaryArtifact a;
    a.path = std::move(path);
    a.size_bytes = bytes.size();
    a.content_hash = sha256_hex(std::span<const std::uint8_t>(bytes));
    std::span<const std::uint8_t> b(bytes);

    if (has_prefix(b, {0x7F, 'E', 'L', 'F'})) {
        a.format = ContainerFormat::ELF;
        a.arch = elf_arch(b);
    } else if (has_prefix(b, {'M', 'Z'}) && pe_header_offset(b)) {
        a.format = ContainerFormat::PE;
        a.arch = pe_arch(b, *pe_header_offset(b));
    } else if (auto layout = macho_layout(b)) {
        a.format = ContainerFormat::MachO;
        a.arch = macho_arch(b, *layout);
    } else {
        a.format = ContainerFormat::Unknown;
        a.arch = {ArchKind::other, "unknown"};
        a.unknown_format = true;
    }
    a.bytes = std::move(bytes);
    if (a.supported()) a.stripped = detect_stripped(a);
    return a;
}

BinaryArtifact load_binary(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw Error(ErrorCode::FileNotReadable, "not a regular file: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotReadable, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::FileNotReadable, "read failed: " + path.string());
    return inspect_bytes(std::move(bytes), path);
}

bool detect_stripped(const BinaryArtifact& artifact) {
    std::span<const std::uint8_t> b(artifact.bytes);
    switch (artifact.format) {
    case ContainerFormat::ELF: return elf_stripped(b);
    case ContainerFormat::PE: return pe_stripped(b);
    case ContainerFormat::MachO: return macho_stripped(b, *macho_layout(b));
    case ContainerFormat::Unknown: break;
    }
    throw Error(ErrorCode::UnsupportedFormat, "cannot inspect symbols of an unknown container");
}

}  // namespace vulbin::ingest
