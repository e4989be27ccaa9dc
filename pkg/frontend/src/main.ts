// Browser entry point: login/registration, then one dashboard per role.
// Every mutation is signed locally and sent through POST /tx; the session
// token authorizes reads only.

import { ApiClient } from "./api.js";
import {
  Account,
  AdminPortal,
  AuthFlow,
  DoctorPortal,
  PatientPortal,
  SealedRecordEntry,
} from "./controllers.js";
import { KeyPair } from "./crypto.js";
import { hasIdentity } from "./keystore.js";
import { NAVIGATION, NavItem, Role } from "./nav.js";
import { banner, clear, download, el, field, table } from "./render.js";

const api = new ApiClient(
  (window as { MEDLEDGER_API?: string }).MEDLEDGER_API ?? "http://127.0.0.1:8545",
);
const auth = new AuthFlow(api, window.localStorage);

const root = document.getElementById("app") as HTMLElement;
let keypair: KeyPair | null = null;

function input(name: string, type = "text", placeholder = ""): HTMLInputElement {
  return el("input", { name, type, placeholder });
}

function value(form: HTMLElement, name: string): string {
  return (form.querySelector(`[name=${name}]`) as HTMLInputElement).value;
}

// ---- login / registration --------------------------------------------------

function renderLogin(message?: HTMLElement): void {
  clear(root);
  const box = el("div", { class: "card" });
  box.append(el("h1", {}, ["MedLedger"]));
  if (message) box.append(message);

  const unlockForm = el("form", { class: "stack" });
  unlockForm.append(
    el("h2", {}, [hasIdentity(window.localStorage) ? "Sign in" : "No identity yet"]),
    field("Passphrase", input("passphrase", "password")),
    el("button", { type: "submit" }, ["Unlock & sign in"]),
  );
  unlockForm.onsubmit = async (event) => {
    event.preventDefault();
    try {
      keypair = await auth.unlock(value(unlockForm, "passphrase"));
    } catch (err) {
      renderLogin(banner("error", `Unlock failed: ${(err as Error).message}`));
      return;
    }
    const outcome = await auth.login(keypair);
    if (outcome.state === "active") renderDashboard(outcome.role);
    else if (outcome.state === "awaiting-activation") {
      renderLogin(banner("info", "Account registered — awaiting activation by an administrator."));
    } else renderLogin(banner("error", `Login failed: ${outcome.reason}`));
  };

  const registerForm = el("form", { class: "stack" });
  const roleSelect = el("select", { name: "role" }, [
    el("option", { value: "patient" }, ["patient"]),
    el("option", { value: "doctor" }, ["doctor"]),
  ]);
  registerForm.append(
    el("h2", {}, ["Create identity"]),
    field("Name", input("name")),
    field("Role", roleSelect),
    field("Birth date / specialty", input("extra", "text", "1990-01-01 or cardiology")),
    field("New passphrase", input("newpass", "password")),
    el("button", { type: "submit" }, ["Generate key & register"]),
  );
  registerForm.onsubmit = async (event) => {
    event.preventDefault();
    const role = value(registerForm, "role") as "patient" | "doctor";
    const profile: Record<string, string> = { name: value(registerForm, "name") };
    if (value(registerForm, "extra")) {
      profile[role === "patient" ? "birth_date" : "specialty"] = value(registerForm, "extra");
    }
    const { receipt } = await auth.createIdentity(value(registerForm, "newpass"), role, profile);
    if (receipt.ok) {
      renderLogin(banner("ok", "Registered on-chain. An administrator must activate you before you can sign in."));
    } else {
      renderLogin(banner("error", `Registration failed: ${receipt.error.error}`));
    }
  };

  box.append(unlockForm, el("hr"), registerForm);
  root.append(box);
}

// ---- dashboards ---------------------------------------------------------------

function renderDashboard(role: Role): void {
  clear(root);
  const nav = el("nav", {}, []);
  const content = el("main", { id: "content" });
  const items = NAVIGATION[role];
  for (const item of items) {
    const button = el("button", { "data-nav": item.id }, [item.label]);
    button.onclick = () => renderSection(role, item, content);
    nav.append(button);
  }
  const logout = el("button", { class: "logout" }, ["Log out"]);
  logout.onclick = async () => {
    await api.logout();
    keypair = null;
    renderLogin();
  };
  nav.append(logout);
  root.append(el("header", {}, [el("strong", {}, [`MedLedger — ${role}`]), nav]), content);
  renderSection(role, items[0] as NavItem, content);
}

async function renderSection(role: Role, item: NavItem, content: HTMLElement): Promise<void> {
  clear(content);
  if (!keypair) return renderLogin();
  if (role === "patient") return renderPatientSection(item.id, content);
  if (role === "doctor") return renderDoctorSection(item.id, content);
  return renderAdminSection(item.id, content);
}

function describeError(prefix: string, error: { error: string }): HTMLElement {
  const hint = error.error === "NoActiveGrant" ? " — request patient consent first" : "";
  return banner("error", `${prefix}: ${error.error}${hint}`);
}

// ---- patient -------------------------------------------------------------------

async function renderPatientSection(section: string, content: HTMLElement): Promise<void> {
  const portal = new PatientPortal(api, keypair!);
  if (section === "booking") {
    const form = el("form", { class: "stack" });
    const slotsBox = el("div", { class: "slots" });
    form.append(
      field("Doctor address", input("doctor", "text", "0x…")),
      field("Date", input("date", "date")),
      el("button", { type: "submit" }, ["Show free slots"]),
      slotsBox,
    );
    form.onsubmit = async (event) => {
      event.preventDefault();
      clear(slotsBox as HTMLElement);
      const doctor = value(form, "doctor");
      const date = value(form, "date");
      const slots = await portal.freeSlots(doctor, date);
      if (!slots.ok) {
        const why =
          slots.error.error === "SlotBeforeSystemStart"
            ? "date is before the system start date"
            : slots.error.error;
        slotsBox.append(banner("error", `Cannot list slots: ${why}`));
        return;
      }
      for (const slot of slots.data.free_slots) {
        const pick = el("button", { class: "slot", "data-slot": String(slot) }, [`Slot ${slot}`]);
        pick.onclick = async (e) => {
          e.preventDefault();
          const outcome = await portal.book(doctor, date, slot);
          if (outcome.result === "booked") {
            slotsBox.prepend(banner("ok", `Requested slot ${slot} on ${date}.`));
          } else if (outcome.result === "slot-taken") {
            clear(slotsBox as HTMLElement);
            slotsBox.append(banner("error", "Slot was just taken — grid refreshed."));
            form.dispatchEvent(new Event("submit"));
          } else {
            slotsBox.prepend(banner("error", `Booking failed: ${outcome.reason}`));
          }
        };
        slotsBox.append(pick);
      }
    };
    content.append(el("h2", {}, ["Book an appointment"]), form);
    return;
  }
  if (section === "appointments") {
    const result = await portal.appointments();
    if (!result.ok) return void content.append(describeError("Appointments", result.error));
    content.append(
      el("h2", {}, ["My appointments"]),
      table(
        ["id", "doctor", "date", "slot", "status"],
        result.data.appointments.map((a) => [
          String(a.id), a.doctor, a.date, String(a.slot), a.status,
        ]),
      ),
    );
    return;
  }
  if (section === "prescriptions") {
    const result = await portal.prescriptions();
    if (!result.ok) return void content.append(describeError("Prescriptions", result.error));
    content.append(el("h2", {}, ["Prescriptions"]), el("pre", {}, [JSON.stringify(result.data.prescriptions, null, 2)]));
    return;
  }
  if (section === "labs") {
    const result = await portal.labResults();
    if (!result.ok) return void content.append(describeError("Lab results", result.error));
    content.append(
      el("h2", {}, ["Lab results"]),
      table(
        ["id", "parameter", "value", "flagged"],
        result.data.lab_results.map((r) => [
          String(r.id), String(r.parameter_id), String(r.value),
          r.flagged ? "⚠ outside range" : "normal",
        ]),
      ),
    );
    return;
  }
  if (section === "records") {
    const result = await portal.records();
    if (!result.ok) return void content.append(describeError("Records", result.error));
    content.append(el("h2", {}, ["Medical records (decrypted locally)"]));
    for (const entry of result.data.records) {
      const box = el("div", { class: "card" }, [
        el("strong", {}, [`#${entry.id} ${entry.record_kind} from ${entry.author}`]),
      ]);
      const show = el("button", {}, ["Decrypt"]);
      show.onclick = async () => {
        const text = await portal.decryptRecord(entry);
        box.append(el("pre", {}, [text]));
        show.remove();
      };
      box.append(show);
      content.append(box);
    }
    return;
  }
  if (section === "consent") {
    const form = el("form", { class: "stack" });
    form.append(field("Doctor address", input("doctor", "text", "0x…")));
    const grant = el("button", { type: "button" }, ["Grant access"]);
    const revoke = el("button", { type: "button" }, ["Revoke access"]);
    const status = el("div");
    grant.onclick = async () => {
      const result = await portal.grantConsent(value(form, "doctor"));
      status.replaceChildren(
        result.ok ? banner("ok", "Consent granted.") : describeError("Grant", result.error),
      );
    };
    revoke.onclick = async () => {
      const result = await portal.revokeConsent(value(form, "doctor"));
      status.replaceChildren(
        result.ok ? banner("ok", "Consent revoked.") : describeError("Revoke", result.error),
      );
    };
    form.append(grant, revoke, status);
    content.append(el("h2", {}, ["Consent management"]), form);
    return;
  }
  if (section === "profile") return renderProfile(portal, content);
  if (section === "activity") return renderAudit(portal, content);
}

async function renderProfile(portal: PatientPortal | DoctorPortal | AdminPortal, content: HTMLElement) {
  const me = await portal.me();
  if (!me.ok) return void content.append(describeError("Profile", me.error));
  content.append(el("h2", {}, ["Profile"]), el("pre", {}, [JSON.stringify(me.data, null, 2)]));
}

async function renderAudit(portal: PatientPortal | DoctorPortal | AdminPortal, content: HTMLElement) {
  const log = await portal.audit();
  if (!log.ok) return void content.append(describeError("Audit", log.error));
  content.append(el("h2", {}, ["Activity"]), el("pre", {}, [JSON.stringify(log.data.audit, null, 2)]));
}

// ---- doctor --------------------------------------------------------------------

async function renderDoctorSection(section: string, content: HTMLElement): Promise<void> {
  const portal = new DoctorPortal(api, keypair!);
  if (section === "appointments") {
    const result = await portal.appointments();
    if (!result.ok) return void content.append(describeError("Appointments", result.error));
    content.append(el("h2", {}, ["Appointments"]));
    for (const appointment of result.data.appointments) {
      const row = el("div", { class: "card" }, [
        el("strong", {}, [`#${appointment.id} ${appointment.date} slot ${appointment.slot}`]),
        el("span", {}, [` patient ${appointment.patient} — ${appointment.status} `]),
      ]);
      const actions = el("div", { class: "actions" });
      const act = (label: string, run: () => Promise<unknown>) => {
        const button = el("button", {}, [label]);
        button.onclick = async () => {
          await run();
          renderDoctorSection("appointments", clear(content));
        };
        actions.append(button);
      };
      if (appointment.status === "requested") {
        act("Confirm", () => portal.confirm(appointment.id));
        act("Cancel", () => portal.cancel(appointment.id));
      } else if (appointment.status === "confirmed" || appointment.status === "rescheduled") {
        act("Complete", () => portal.complete(appointment.id));
        act("Cancel", () => portal.cancel(appointment.id));
        const slotInput = input("newslot", "number", "slot");
        const dateInput = input("newdate", "date");
        const move = el("button", {}, ["Reschedule"]);
        move.onclick = async () => {
          const result = await portal.reschedule(
            appointment.id, dateInput.value, Number(slotInput.value),
          );
          if (!result.ok) row.append(describeError("Reschedule", result.error));
          else if (result.data.outcome === "deny") {
            row.append(banner("error", `Reschedule refused: ${result.data.reason}`));
          } else renderDoctorSection("appointments", clear(content));
        };
        actions.append(dateInput, slotInput, move);
      }
      row.append(actions);
      content.append(row);
    }
    return;
  }
  if (section === "prescribe") {
    const catalog = await portal.medications();
    if (!catalog.ok) return void content.append(describeError("Catalog", catalog.error));
    const form = el("form", { class: "stack" });
    const medSelect = el(
      "select",
      { name: "medication" },
      catalog.data.medications.map((m) =>
        el("option", { value: String(m.id) }, [`${m.name} ${m.strength}`]),
      ),
    );
    form.append(
      field("Appointment id", input("appointment", "number")),
      field("Medication", medSelect),
      field("Dosage", input("dosage")),
      el("button", { type: "submit" }, ["Prescribe"]),
    );
    const status = el("div");
    form.onsubmit = async (event) => {
      event.preventDefault();
      const result = await portal.prescribe(
        Number(value(form, "appointment")),
        Number(value(form, "medication")),
        value(form, "dosage"),
      );
      status.replaceChildren(
        result.ok && result.data.outcome !== "deny"
          ? banner("ok", "Prescription recorded.")
          : banner("error", "Prescription refused."),
      );
    };
    content.append(el("h2", {}, ["Prescribe"]), form, status);
    return;
  }
  if (section === "labs") {
    const params = await portal.labParameters();
    if (!params.ok) return void content.append(describeError("Parameters", params.error));
    const form = el("form", { class: "stack" });
    const paramSelect = el(
      "select",
      { name: "parameter" },
      params.data.lab_parameters.map((p) =>
        el("option", { value: String(p.id) }, [`${p.name} (${p.unit}) ${p.low}–${p.high}`]),
      ),
    );
    form.append(
      field("Patient address", input("patient", "text", "0x…")),
      field("Parameter", paramSelect),
      field("Value", input("value", "number")),
      el("button", { type: "submit" }, ["Submit result"]),
    );
    const status = el("div");
    form.onsubmit = async (event) => {
      event.preventDefault();
      const result = await portal.enterLabResult(
        value(form, "patient"),
        Number(value(form, "parameter")),
        Number(value(form, "value")),
      );
      status.replaceChildren(
        result.ok && result.data.outcome !== "deny"
          ? banner("ok", "Result stored and shared with the patient.")
          : describeError("Lab entry", { error: result.ok ? result.data.reason ?? "denied" : result.error.error }),
      );
    };
    content.append(el("h2", {}, ["Laboratory"]), form, status);
    return;
  }
  if (section === "records") {
    const form = el("form", { class: "stack" });
    form.append(
      field("Patient address", input("patient", "text", "0x…")),
      field("Kind", input("kind", "text", "note")),
      field("Content", input("text")),
      el("button", { type: "submit" }, ["Seal & append"]),
    );
    const status = el("div");
    form.onsubmit = async (event) => {
      event.preventDefault();
      const result = await portal.appendNote(
        value(form, "patient"), value(form, "kind"), value(form, "text"),
      );
      status.replaceChildren(
        result.ok && result.data.outcome !== "deny"
          ? banner("ok", "Record sealed and appended.")
          : describeError("Append", { error: result.ok ? result.data.reason ?? "denied" : result.error.error }),
      );
    };
    content.append(el("h2", {}, ["Append patient record"]), form, status);
    return;
  }
  if (section === "ereports") return renderAudit(portal, content);
  if (section === "profile") return renderProfile(portal, content);
}

// ---- admin ----------------------------------------------------------------------

async function renderAdminSection(section: string, content: HTMLElement): Promise<void> {
  const portal = new AdminPortal(api, keypair!);
  if (section === "users") {
    const result = await portal.users();
    if (!result.ok) return void content.append(describeError("Users", result.error));
    content.append(el("h2", {}, ["User management"]));
    const rows = result.data.users.map((user) => {
      const action = el("button", {}, [user.status === "active" ? "Deactivate" : "Activate"]);
      action.onclick = async () => {
        await portal.setStatus(user.address, user.status === "active" ? "inactive" : "active");
        renderAdminSection("users", clear(content));
      };
      return [user.address, user.role, user.status, (user.profile as { name?: string }).name ?? "", action] as (string | Node)[];
    });
    content.append(table(["address", "role", "status", "name", ""], rows));
    return;
  }
  if (section === "medications" || section === "lab-parameters") {
    const isMeds = section === "medications";
    const listing = isMeds ? await portal.medications() : await portal.labParameters();
    if (!listing.ok) return void content.append(describeError("Catalog", listing.error));
    const form = el("form", { class: "stack" });
    if (isMeds) {
      form.append(
        field("Name", input("name")), field("Form", input("form")),
        field("Strength", input("strength")),
        el("button", { type: "submit" }, ["Add medication"]),
      );
      form.onsubmit = async (event) => {
        event.preventDefault();
        await portal.addMedication(value(form, "name"), value(form, "form"), value(form, "strength"));
        renderAdminSection(section, clear(content));
      };
    } else {
      form.append(
        field("Name", input("name")), field("Unit", input("unit")),
        field("Low", input("low", "number")), field("High", input("high", "number")),
        el("button", { type: "submit" }, ["Add parameter"]),
      );
      form.onsubmit = async (event) => {
        event.preventDefault();
        await portal.addLabParameter(
          value(form, "name"), value(form, "unit"),
          Number(value(form, "low")), Number(value(form, "high")),
        );
        renderAdminSection(section, clear(content));
      };
    }
    content.append(
      el("h2", {}, [isMeds ? "Medications" : "Lab parameters"]),
      el("pre", {}, [JSON.stringify(listing.data, null, 2)]),
      form,
    );
    return;
  }
  if (section === "export") {
    content.append(el("h2", {}, ["Data export"]));
    for (const dataset of ["users", "medications", "lab_parameters", "audit"] as const) {
      const row = el("div", { class: "actions" }, [el("strong", {}, [dataset])]);
      for (const format of ["csv", "xml", "txt"] as const) {
        const button = el("button", {}, [format.toUpperCase()]);
        button.onclick = async () => {
          const result = await portal.exportDataset(dataset, format);
          if (result.ok) {
            const mime = { csv: "text/csv", xml: "application/xml", txt: "text/plain" }[format];
            download(`${dataset}.${format}`, result.data, mime);
          }
        };
        row.append(button);
      }
      content.append(row);
    }
    return;
  }
  if (section === "system") {
    content.append(
      el("h2", {}, ["System variables"]),
      banner("info", "Scheduling grid and start date are fixed at genesis on this deployment."),
    );
    return;
  }
  if (section === "audit") return renderAudit(portal, content);
  if (section === "profile") return renderProfile(portal, content);
}

renderLogin();
