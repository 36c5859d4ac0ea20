#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vulbin::ingest {

enum class ContainerFormat { ELF, PE, MachO, Unknown };

enum class ArchKind { x86, x86_64, arm, aarch64, other };

struct Architecture {
    ArchKind kind = ArchKind::other;
    std::string label;  // populated for ArchKind::other, e.g. "e_machine=243"

    std::string name() const;
    friend bool operator==(const Architecture&, const Architecture&) = default;
};

std::string to_string(ContainerFormat format);

// A loaded executable. Byte-identical files produce identical artifacts
// (apart from `path`).
struct BinaryArtifact {
    std::filesystem::path path;
    ContainerFormat format = ContainerFormat::Unknown;
    Architecture arch;
    bool stripped = false;
    std::string content_hash;  // SHA-256, lowercase hex
    std::uint64_t size_bytes = 0;
    // Set when the magic bytes matched no supported container; the artifact
    // is still returned so callers can report it, but decompilation refuses it.
    bool unknown_format = false;
    std::vector<std::uint8_t> bytes;

    bool supported() const { return format != ContainerFormat::Unknown; }
};

// Throws Error{FileNotReadable} for missing/unreadable/non-regular paths.
BinaryArtifact load_binary(const std::filesystem::path& path);

// Same detection as load_binary over an in-memory image.
BinaryArtifact inspect_bytes(std::vector<std::uint8_t> bytes, std::filesystem::path path = {});

// Strippedness rules:
//   ELF    no SHT_SYMTAB section, or the symbol table defines no STT_FUNC symbol.
//   PE     COFF header has no symbol table (PointerToSymbolTable or NumberOfSymbols zero).
//   Mach-O no LC_SYMTAB, or no non-debug symbol defined in a section (N_SECT).
// A section/command table that cannot be read counts as "no symbol table".
// Throws Error{UnsupportedFormat} for ContainerFormat::Unknown.
bool detect_stripped(const BinaryArtifact& artifact);

}  // namespace vulbin::ingest
