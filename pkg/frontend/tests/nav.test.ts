// The navigation must mirror the committed permission table: a tab may only
// reference operations its role is allowed to perform, and the admin gets no
// clinical surface at all.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { NAVIGATION } from "../src/nav.js";

const table: Record<string, string> = JSON.parse(
  readFileSync(
    new URL("../../tests/fixtures/permission_table.json", import.meta.url),
    "utf-8",
  ),
);

describe("role navigation", () => {
  it("offers only operations the permission table allows", () => {
    for (const [role, items] of Object.entries(NAVIGATION)) {
      for (const item of items) {
        for (const op of item.ops) {
          expect(table[`${role}|${op}`], `${role} tab ${item.id} op ${op}`).toBe("allow");
        }
      }
    }
  });

  it("covers every allowed operation of each role somewhere in its nav", () => {
    for (const [role, items] of Object.entries(NAVIGATION)) {
      const offered = new Set(items.flatMap((item) => item.ops));
      const allowed = Object.entries(table)
        .filter(([key, value]) => key.startsWith(`${role}|`) && value === "allow")
        .map(([key]) => key.split("|")[1]!);
      for (const op of allowed) {
        expect(offered.has(op), `${role} misses allowed op ${op}`).toBe(true);
      }
    }
  });

  it("admin navigation has no records or appointment surface", () => {
    const adminTabs = NAVIGATION.admin.map((item) => item.id);
    expect(adminTabs).not.toContain("records");
    expect(adminTabs).not.toContain("appointments");
    expect(adminTabs).not.toContain("booking");
    const adminOps = new Set(NAVIGATION.admin.flatMap((item) => item.ops));
    expect(adminOps.has("read_records")).toBe(false);
    expect(adminOps.has("append_record")).toBe(false);
    expect(adminOps.has("list_appointments")).toBe(false);
  });

  it("matches the committed navigation snapshot", () => {
    expect(NAVIGATION).toMatchSnapshot();
  });
});
