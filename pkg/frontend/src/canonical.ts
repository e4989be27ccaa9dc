// Canonical JSON: sorted keys, no whitespace, UTF-8. Signatures cover these
// bytes, and the node re-serializes incoming commands the same way, so the
// two sides must agree byte for byte.

export type Json =
  | null
  | boolean
  | number
  | string
  | Json[]
  | { [key: string]: Json };

export function canonicalStringify(value: Json): string {
  if (value === null || typeof value === "boolean" || typeof value === "string") {
    return JSON.stringify(value);
  }
  if (typeof value === "number") {
    if (!Number.isFinite(value)) throw new Error("non-finite number in command");
    // JSON.stringify matches python repr() for round-trippable doubles
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonicalStringify).join(",")}]`;
  }
  const keys = Object.keys(value).sort();
  const body = keys
    .map((k) => `${JSON.stringify(k)}:${canonicalStringify(value[k] as Json)}`)
    .join(",");
  return `{${body}}`;
}

export function canonicalBytes(value: Json): Uint8Array {
  return new TextEncoder().encode(canonicalStringify(value));
}
