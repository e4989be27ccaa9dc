// Role-scoped navigation. Every tab names the ledger operations it drives,
// and a test checks each one against the committed permission table: the UI
// can never offer an action the chain would refuse. Administrators get the
// management plane only — no records, no clinical tabs.

export type Role = "patient" | "doctor" | "admin";

export interface NavItem {
  id: string;
  label: string;
  ops: string[];
}

export const NAVIGATION: Record<Role, NavItem[]> = {
  patient: [
    { id: "booking", label: "Book appointment", ops: ["list_free_slots", "request_appointment"] },
    { id: "appointments", label: "My appointments", ops: ["list_appointments"] },
    { id: "prescriptions", label: "Prescriptions", ops: ["list_prescriptions", "read_catalogs"] },
    { id: "labs", label: "Lab results", ops: ["list_lab_results", "read_catalogs"] },
    { id: "records", label: "Medical records", ops: ["read_records"] },
    { id: "consent", label: "Consent", ops: ["grant_access", "revoke_access"] },
    { id: "profile", label: "Profile", ops: ["read_profile", "update_profile"] },
    { id: "activity", label: "Activity", ops: ["read_audit"] },
  ],
  doctor: [
    { id: "appointments", label: "Appointments", ops: ["list_appointments", "update_appointment", "list_free_slots"] },
    { id: "prescribe", label: "Prescriptions", ops: ["prescribe", "list_prescriptions", "read_catalogs"] },
    { id: "labs", label: "Laboratory", ops: ["input_lab_result", "list_lab_results", "read_catalogs"] },
    { id: "records", label: "Patient records", ops: ["append_record", "read_records"] },
    { id: "ereports", label: "E-reports", ops: ["read_audit"] },
    { id: "profile", label: "Profile", ops: ["read_profile", "update_profile"] },
  ],
  admin: [
    { id: "users", label: "Users", ops: ["list_users", "set_user_status", "register_user"] },
    { id: "medications", label: "Medications", ops: ["read_catalogs", "add_medication"] },
    { id: "lab-parameters", label: "Lab parameters", ops: ["read_catalogs", "add_lab_parameter"] },
    { id: "system", label: "System", ops: ["set_system_vars"] },
    { id: "export", label: "Export", ops: ["export_data"] },
    { id: "audit", label: "Audit log", ops: ["read_audit"] },
    { id: "profile", label: "Profile", ops: ["read_profile", "update_profile"] },
  ],
};
