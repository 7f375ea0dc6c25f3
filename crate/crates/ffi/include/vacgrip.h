#ifndef VACGRIP_H
#define VACGRIP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Longest encoded frame, bytes.
 */
#define VG_MAX_FRAME 19

typedef enum VgChannel {
  VG_CHANNEL_LEFT = 0,
  VG_CHANNEL_RIGHT = 1,
} VgChannel;

/**
 * Command opcodes as sent on the wire.
 */
typedef enum VgCommandKind {
  VG_COMMAND_KIND_TURN_OFF = 0,
  VG_COMMAND_KIND_TURN_ON = 1,
  VG_COMMAND_KIND_QUERY = 2,
} VgCommandKind;

/**
 * Result codes.
 */
typedef enum VgError {
  VG_ERROR_OK = 0,
  VG_ERROR_NULL_POINTER = 1,
  VG_ERROR_INVALID_ARGUMENT = 2,
  VG_ERROR_BUFFER_TOO_SMALL = 3,
  /**
   * More bytes are needed to complete a frame.
   */
  VG_ERROR_TRUNCATED = 4,
  VG_ERROR_CHECKSUM = 5,
  /**
   * A complete frame with bad contents; drop `consumed` bytes and retry.
   */
  VG_ERROR_MALFORMED = 6,
  VG_ERROR_UNKNOWN_MATERIAL = 7,
  VG_ERROR_PANIC = 99,
} VgError;

/**
 * Emulated controller for one or both channels, with a simulated line
 * whose clock only moves through [`vg_device_advance`].
 */
typedef struct VgDevice VgDevice;

/**
 * One pneumatic line with two cups.
 */
typedef struct VgLine VgLine;

typedef struct VgCommand {
  enum VgCommandKind kind;
  enum VgChannel channel;
} VgCommand;

typedef struct VgStatus {
  enum VgChannel channel;
  bool pump_on;
  bool valve_closed;
  /**
   * Gauge pressure, hundredths of a kPa, in [-6000, 0].
   */
  int16_t pressure_centi_kpa;
  /**
   * 0 none, 1 pump stall, 2 desync.
   */
  uint8_t fault;
} VgStatus;

/**
 * Copies the last error message on this thread into `buf` as a
 * NUL-terminated string, truncating to fit. Returns the full message
 * length excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t vg_last_error_message(char *buf, size_t cap);

/**
 * XOR checksum over the length byte and payload.
 *
 * # Safety
 * `payload` must point to `len` readable bytes (or be null when `len` is 0).
 */
uint8_t vg_checksum(const uint8_t *payload, uint8_t len);

/**
 * Encodes a command frame into `out`; `written` receives the frame length
 * (also on `VG_ERROR_BUFFER_TOO_SMALL`).
 *
 * # Safety
 * `out` must point to `cap` writable bytes and `written` to a `size_t`.
 */
enum VgError vg_encode_command(struct VgCommand cmd, uint8_t *out, size_t cap, size_t *written);

/**
 * Decodes one command frame from the start of `bytes`. `consumed` receives
 * how many bytes to drop before the next call (0 when truncated).
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` and `consumed` must be
 * valid for writes.
 */
enum VgError vg_decode_command(const uint8_t *bytes,
                               size_t len,
                               struct VgCommand *out,
                               size_t *consumed);

/**
 * Encodes a status frame.
 *
 * # Safety
 * `status` must be readable; `out` must point to `cap` writable bytes and
 * `written` to a `size_t`.
 */
enum VgError vg_encode_status(const struct VgStatus *status,
                              uint8_t *out,
                              size_t cap,
                              size_t *written);

/**
 * Decodes one status frame from the start of `bytes`.
 *
 * # Safety
 * As for [`vg_decode_command`].
 */
enum VgError vg_decode_status(const uint8_t *bytes,
                              size_t len,
                              struct VgStatus *out,
                              size_t *consumed);

/**
 * Creates an emulated controller. `channels` is a bit mask (1 left,
 * 2 right, 3 both). `material` names what the cups are sealed against, or
 * null for open cups. Returns null on failure.
 *
 * # Safety
 * `material` must be null or a NUL-terminated string.
 */
struct VgDevice *vg_device_new(uint8_t channels, const char *material);

/**
 * Releases a device. Null is ignored.
 *
 * # Safety
 * `dev` must come from [`vg_device_new`] and not be used afterwards.
 */
void vg_device_free(struct VgDevice *dev);

/**
 * Moves the device clock forward; the line pressure integrates over the
 * interval at the next command.
 *
 * # Safety
 * `dev` must be a live handle.
 */
enum VgError vg_device_advance(struct VgDevice *dev, double seconds);

/**
 * Feeds host bytes to the device and writes its replies (one status frame
 * per valid command) to `out`. Bad input is skipped, never fatal.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes, `out` to `cap` writable
 * bytes, `written` to a `size_t`.
 */
enum VgError vg_device_feed(struct VgDevice *dev,
                            const uint8_t *bytes,
                            size_t len,
                            uint8_t *out,
                            size_t cap,
                            size_t *written);

/**
 * Current pump and valve state of one channel.
 *
 * # Safety
 * `dev` must be a live handle; `pump_on` and `valve_closed` writable.
 */
enum VgError vg_device_state(const struct VgDevice *dev,
                             enum VgChannel channel,
                             bool *pump_on,
                             bool *valve_closed);

/**
 * Creates a line at ambient with `sealed_cups` (0..=2) sealed against
 * `material`; the rest are open. Returns null on failure.
 *
 * # Safety
 * `material` must be a NUL-terminated string.
 */
struct VgLine *vg_line_new(const char *material, uint8_t sealed_cups);

/**
 * Releases a line. Null is ignored.
 *
 * # Safety
 * `line` must come from [`vg_line_new`] and not be used afterwards.
 */
void vg_line_free(struct VgLine *line);

/**
 * Integrates the line for `seconds` with suction on (pump running, valve
 * closed) or off (vented).
 *
 * # Safety
 * `line` must be a live handle.
 */
enum VgError vg_line_advance(struct VgLine *line, bool suction_on, double seconds);

/**
 * Gauge pressure (kPa), plateau pressure with suction on (kPa), and the
 * current holding force (N).
 *
 * # Safety
 * `line` must be a live handle; outputs may be null to skip them.
 */
enum VgError vg_line_read(const struct VgLine *line,
                          double *gauge_kpa,
                          double *steady_kpa,
                          double *force_n);

/**
 * Force needed to hold `mass_kg` with the given safety factor, N.
 */
double vg_required_force(double mass_kg, double safety_factor);

#endif /* VACGRIP_H */
