/** Entry point: pick or create a workflow, then mount the editor. */

import { ApiClient } from "./api.js";
import { WorkflowEditor } from "./editor.js";

async function boot(): Promise<void> {
  const app = document.getElementById("app");
  if (app === null) return;
  const client = new ApiClient();

  const chooser = document.createElement("div");
  chooser.className = "chooser";
  const heading = document.createElement("h1");
  heading.textContent = "Workflows";
  chooser.appendChild(heading);

  const fail = (err: unknown): void => {
    const note = document.createElement("p");
    note.className = "boot-error";
    note.textContent = err instanceof Error ? err.message : String(err);
    app.appendChild(note);
  };

  const openEditor = (source: { name?: string; from_workflow?: string }): void => {
    client
      .createSession(source)
      .then((session) => {
        chooser.remove();
        new WorkflowEditor(app, client, session);
      })
      .catch(fail);
  };

  const { workflows } = await client.listWorkflows();
  const list = document.createElement("ul");
  for (const name of workflows) {
    const item = document.createElement("li");
    const open = document.createElement("button");
    open.textContent = name;
    open.addEventListener("click", () => openEditor({ from_workflow: name }));
    item.appendChild(open);
    list.appendChild(item);
  }
  chooser.appendChild(list);

  const nameInput = document.createElement("input");
  nameInput.placeholder = "new workflow name";
  const create = document.createElement("button");
  create.textContent = "Create";
  create.addEventListener("click", () => {
    if (nameInput.value !== "") openEditor({ name: nameInput.value });
  });
  chooser.appendChild(nameInput);
  chooser.appendChild(create);
  app.appendChild(chooser);
}

boot().catch((err: unknown) => {
  document.body.textContent = err instanceof Error ? err.message : String(err);
});
