#pragma once

#include <filesystem>
#include <string>

#include "cellstorm/types.hpp"

namespace cellstorm::io {

/// Distinct failure modes of the stack reader; carried in StackFormatError.
enum class StackErrorKind { bad_magic, bad_header, truncated, size_mismatch, value_range, io };

class StackFormatError : public Error {
public:
    StackFormatError(StackErrorKind kind, const std::string& what);
    StackErrorKind kind() const noexcept { return kind_; }

private:
    StackErrorKind kind_;
};

class TableParseError : public Error {
public:
    TableParseError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

inline constexpr char kStackMagic[] = "CSTK1\n";
inline constexpr char kTableHeader[] = "frame,x [nm],y [nm],sigma [nm],intensity [photon]";

/// .cstk layout: magic, one-line JSON header, newline, little-endian u16
/// payload in frame-major, row-major order.
void write_stack(const FrameStack& stack, const std::filesystem::path& path);
FrameStack read_stack(const std::filesystem::path& path);

/// Header line only (no magic); exposed for tests and manifests.
std::string stack_header_json(const FrameStack& stack);

void write_table(const LocalizationTable& table, const std::filesystem::path& path);
LocalizationTable read_table(const std::filesystem::path& path);

/// Emitters go through the same CSV schema: photons land in the intensity
/// column and sigma stays empty. Emitter ids are not persisted.
void write_emitters(const EmitterTable& table, const std::filesystem::path& path);
EmitterTable read_emitters(const std::filesystem::path& path);

std::string table_to_csv(const LocalizationTable& table);
LocalizationTable table_from_csv(const std::string& text);

/// Shortest round-trip decimal form, always carrying a decimal point.
std::string format_number(double v);

} // namespace cellstorm::io
