#pragma once

// Client/provider wire format. A frame is
//   type (u8) | payload length (u32 LE) | payload
// with payloads:
//   InferRequest  (0x01): a CMXE image, byte for byte
//   InferResponse (0x02): predicted class u32, logit count u32, logits f64
//   Error         (0x7F): code u8, UTF-8 detail

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "orthomix/bytes.hpp"
#include "orthomix/error.hpp"
#include "orthomix/image.hpp"
#include "orthomix/model.hpp"

namespace orthomix {

enum class MessageType : std::uint8_t { infer_request = 0x01, infer_response = 0x02, error = 0x7F };

enum class ErrorCode : std::uint8_t { malformed_frame = 1, geometry_mismatch = 2, kind_violation = 3 };

inline constexpr std::size_t frame_header_size = 5;
inline constexpr std::size_t max_payload_size = 64u << 20;

/// A protocol-level failure, either detected locally or reported by the
/// provider in an Error frame.
class ProtocolError : public Error {
public:
    ProtocolError(ErrorCode code, const std::string& what) : Error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct WireMessage {
    MessageType type = MessageType::error;
    Bytes payload;

    bool operator==(const WireMessage&) const = default;
};

struct FrameHeader {
    MessageType type;
    std::uint32_t length;
};

/// Throws ProtocolError(malformed_frame) when the payload exceeds the limit.
Bytes encode_frame(const WireMessage& msg);
/// Validates the type byte and the length limit.
FrameHeader decode_frame_header(std::span<const std::uint8_t> header);
/// Decodes exactly one frame occupying all of `bytes`.
WireMessage decode_frame(std::span<const std::uint8_t> bytes);

struct InferRequest {
    ImageTensor image;
    std::uint32_t patch = 1;
};

struct InferResponse {
    std::uint32_t predicted = 0;
    std::vector<double> logits;

    bool operator==(const InferResponse&) const = default;
};

struct ErrorReply {
    ErrorCode code = ErrorCode::malformed_frame;
    std::string detail;

    bool operator==(const ErrorReply&) const = default;
};

WireMessage make_request(const InferRequest& req);
WireMessage make_response(const InferResponse& resp);
WireMessage make_error(const ErrorReply& err);

/// Parses the payload of an InferRequest. Throws ProtocolError with
/// malformed_frame for undecodable images.
InferRequest parse_request(const WireMessage& msg);
InferResponse parse_response(const WireMessage& msg);
ErrorReply parse_error(const WireMessage& msg);

/// Provider-side handling of one frame: runs the encrypted model and
/// returns an InferResponse, or an Error frame for malformed input,
/// geometry mismatch or a plain-kind image. Never throws for bad input.
WireMessage handle_request(const ConvMixerModel& model, const WireMessage& request);

}  // namespace orthomix
